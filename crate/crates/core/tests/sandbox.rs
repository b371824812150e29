use geo_types::{Geometry, Point};
use odqa_core::catalog::{Cell, DatasetPayload, FieldDescriptor, FieldType};
use odqa_core::geometry::Crs;
use odqa_core::sandbox::*;
use proptest::prelude::*;
use serde_json::Value as Json;

fn run(src: &str) -> ExecutionResult {
    Session::new().execute(src, &ResourceLimits::default())
}

fn ok_log(src: &str) -> String {
    let r = run(src);
    assert_eq!(r.status, Status::Ok, "{src}\n{:?}", r.error_message);
    r.log
}

fn kind_of(src: &str) -> Option<ErrorKind> {
    run(src).error_kind
}

fn field(name: &str, t: FieldType) -> FieldDescriptor {
    FieldDescriptor { name: name.into(), type_hint: t, description: String::new() }
}

fn points_payload(n: usize) -> DatasetPayload {
    let columns = vec![
        field("id", FieldType::Integer),
        field("zone", FieldType::Text),
        field("capacity", FieldType::Real),
        field("geometry", FieldType::Geometry),
    ];
    let rows = (0..n)
        .map(|i| {
            vec![
                Cell::Integer(i as i64),
                Cell::Text(format!("z{}", i % 3)),
                Cell::Real(i as f64 * 1.5),
                Cell::Geometry(Geometry::Point(Point::new(2_683_000.0 + i as f64 * 10.0, 1_248_000.0))),
            ]
        })
        .collect();
    DatasetPayload::new(columns, rows, Some(Crs::parse("EPSG:2056"))).unwrap()
}

#[test]
fn golden_programs_match_cpython() {
    let src = include_str!("golden/programs.py");
    let expected: Json = serde_json::from_str(include_str!("golden/expected.json")).unwrap();
    let expected = expected.as_array().unwrap();
    let chunks: Vec<&str> = src.split("### ").skip(1).collect();
    assert_eq!(chunks.len(), expected.len());
    assert!(chunks.len() >= 40);
    let mut failures = Vec::new();
    for (chunk, exp) in chunks.iter().zip(expected) {
        let (name, body) = chunk.split_once('\n').unwrap();
        assert_eq!(name.trim(), exp["name"].as_str().unwrap());
        let r = run(body);
        let want = exp["stdout"].as_str().unwrap();
        if r.status != Status::Ok || r.log != want {
            failures.push(format!("--- {name}\nstatus {:?} {:?}\nwant:\n{want}got:\n{}", r.status, r.error_message, r.log));
        }
    }
    assert!(failures.is_empty(), "{} golden failures:\n{}", failures.len(), failures.join("\n"));
}

#[test]
fn persistence_across_executions() {
    let mut s = Session::new();
    let lim = ResourceLimits::default();
    assert_eq!(s.execute("x = 2", &lim).status, Status::Ok);
    assert_eq!(s.execute("print(x * 3)", &lim).log, "6\n");
}

#[test]
fn runtime_errors_keep_earlier_bindings() {
    let mut s = Session::new();
    let lim = ResourceLimits::default();
    let r = s.execute("a = 1\nb = 1 / 0\nc = 3", &lim);
    assert_eq!(r.status, Status::RuntimeError);
    assert_eq!(r.error_kind, Some(ErrorKind::DivisionByZero));
    assert!(r.error_message.as_deref().unwrap().contains("line 2"));
    assert!(s.get("a").is_some());
    assert!(s.get("c").is_none());
    assert_eq!(s.execute("print(a + 1)", &lim).log, "2\n");
}

#[test]
fn division_by_zero_leaves_session_usable() {
    let mut s = Session::new();
    let lim = ResourceLimits::default();
    let r = s.execute("1/0", &lim);
    assert_eq!(r.status, Status::RuntimeError);
    assert!(r.error_message.unwrap().starts_with("DivisionByZero"));
    assert_eq!(s.execute("print(1)", &lim).status, Status::Ok);
}

#[test]
fn imports_are_denied() {
    for m in ["os", "sys", "subprocess", "socket", "time", "random", "pathlib", "builtins", "importlib"] {
        assert_eq!(kind_of(&format!("import {m}")), Some(ErrorKind::ImportDenied), "{m}");
        assert_eq!(kind_of(&format!("from {m} import x")), Some(ErrorKind::ImportDenied), "{m}");
    }
    assert_eq!(ok_log("import math\nprint(math.floor(2.5))"), "2\n");
    assert_eq!(ok_log("from geo import area as a\nprint(a)"), "<built-in function geo.area>\n");
}

#[test]
fn submodule_access_is_denied() {
    assert_eq!(kind_of("geo.ops.something"), Some(ErrorKind::SubmoduleAccessDenied));
    assert_eq!(kind_of("import geo.ops"), Some(ErrorKind::SubmoduleAccessDenied));
    assert_eq!(kind_of("from geo import ops"), Some(ErrorKind::SubmoduleAccessDenied));
    assert_eq!(kind_of("math.__dict__"), Some(ErrorKind::SubmoduleAccessDenied));
    assert_eq!(kind_of("x = [1]\nx.__class__"), Some(ErrorKind::AttributeMissing));
    assert_eq!(kind_of("len.__self__"), Some(ErrorKind::AttributeMissing));
}

#[test]
fn infinite_loop_exhausts_ops() {
    let lim = ResourceLimits { max_ops: 100_000, ..Default::default() };
    let r = Session::new().execute("x = 0\nwhile True:\n    x = x + 1", &lim);
    assert_eq!(r.status, Status::ResourceExhausted);
    assert!(r.ops_used >= lim.max_ops);
    assert_eq!(r.error_kind, Some(ErrorKind::OperationCapExceeded));
}

#[test]
fn infinite_loop_halts_under_default_cap_quickly() {
    let t = std::time::Instant::now();
    let r = run("x = 0\nwhile True:\n    x = x + 1");
    assert_eq!(r.status, Status::ResourceExhausted);
    assert_eq!(r.ops_used, ResourceLimits::default().max_ops);
    assert!(t.elapsed().as_secs_f64() < 10.0, "{:?}", t.elapsed());
}

#[test]
fn runaway_recursion_is_a_runtime_error() {
    let r = run("def f(n):\n    return f(n + 1)\nf(0)");
    assert_eq!(r.status, Status::RuntimeError);
    assert_eq!(r.error_kind, Some(ErrorKind::RecursionLimit));
}

#[test]
fn collection_growth_is_capped() {
    let lim = ResourceLimits { max_collection_len: 1000, ..Default::default() };
    let mut s = Session::new();
    assert_eq!(s.execute("x = [0] * 5000", &lim).error_kind, Some(ErrorKind::CollectionTooLarge));
    assert_eq!(s.execute("s = 'ab' * 1000", &lim).error_kind, Some(ErrorKind::CollectionTooLarge));
    let r = s.execute("x = []\nwhile True:\n    x.append(1)", &lim);
    assert_eq!(r.error_kind, Some(ErrorKind::CollectionTooLarge));
}

#[test]
fn output_is_truncated_not_failed() {
    let lim = ResourceLimits { max_output_chars: 50, ..Default::default() };
    let r = Session::new().execute("for i in range(100):\n    print(i)", &lim);
    assert_eq!(r.status, Status::Ok);
    assert!(r.output_truncated);
    assert_eq!(r.log.chars().count(), 50);
}

#[test]
fn syntax_errors_carry_position() {
    let r = run("def f(:");
    assert_eq!(r.status, Status::SyntaxError);
    let msg = r.error_message.unwrap();
    assert!(msg.contains("line 1"), "{msg}");
    match parse("def f(:") {
        Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 1),
        other => panic!("{other:?}"),
    }
    assert_eq!(
        parse("class A: pass").unwrap_err(),
        ParseError::Unsupported { construct: "class".into(), line: 1 }
    );
    assert_eq!(run("x = lambda y: y").error_kind, Some(ErrorKind::UnsupportedConstruct));
}

#[test]
fn parse_simple_assignment() {
    let p = parse("x = 1 + 2").unwrap();
    assert_eq!(p.body.len(), 1);
}

#[test]
fn final_expression_value_is_rendered() {
    assert_eq!(run("x = 4\nx * 2").value.as_deref(), Some("8"));
    assert_eq!(run("'a'").value.as_deref(), Some("'a'"));
    assert_eq!(run("print(1)").value, None);
}

#[test]
fn name_errors() {
    let r = run("print(undefined_name)");
    assert_eq!(r.error_kind, Some(ErrorKind::NameUndefined));
    assert!(r.error_message.unwrap().contains("undefined_name"));
}

#[test]
fn type_and_index_errors() {
    assert_eq!(kind_of("1 + 'a'"), Some(ErrorKind::TypeMismatch));
    assert_eq!(kind_of("[1][3]"), Some(ErrorKind::IndexOutOfRange));
    assert_eq!(kind_of("{'a': 1}['b']"), Some(ErrorKind::KeyNotFound));
    assert_eq!(kind_of("2 ** 64"), Some(ErrorKind::IntegerOverflow));
    assert_eq!(kind_of("int('x')"), Some(ErrorKind::ValueInvalid));
}

#[test]
fn register_dataset_contract() {
    let mut s = Session::new();
    let lim = ResourceLimits::default();
    s.register_dataset("parkplaetze", &points_payload(100)).unwrap();
    assert_eq!(s.execute("print(len(parkplaetze))", &lim).log, "100\n");
    assert_eq!(
        s.register_dataset("parkplaetze", &points_payload(1)),
        Err(RegisterError::NameCollision("parkplaetze".into()))
    );
    assert_eq!(s.register_dataset("2x", &points_payload(1)), Err(RegisterError::InvalidIdentifier("2x".into())));
    assert_eq!(s.register_dataset("for", &points_payload(1)), Err(RegisterError::InvalidIdentifier("for".into())));
    assert!(matches!(s.register_dataset("len", &points_payload(1)), Err(RegisterError::NameCollision(_))));
}

#[test]
fn frame_operations() {
    let mut s = Session::new();
    let lim = ResourceLimits::default();
    s.register_dataset("p", &points_payload(9)).unwrap();
    let r = s.execute(
        r#"
def big(r):
    return r["capacity"] > 4
f = frame.filter(p, big)
print(len(f), f.columns)
g = frame.agg(frame.group_by(p, "zone"), {"capacity": ["sum", "count"], "id": "max"})
print(g.columns)
for row in g:
    print(row["zone"], row["capacity_sum"], row["capacity_count"], row["id_max"])
top = frame.head(frame.sort(p, "capacity", descending=True), 2)
print(top["id"], frame.unique(p, "zone"))
sel = p.select(["id", "zone"])
print(sel.shape)
zones = frame.from_records([{"zone": "z0", "name": "North"}, {"zone": "z1", "name": "South"}])
j = frame.join(p, zones, "zone", how="left")
print(len(j), j[0]["name"], j[2]["name"], j.columns)
w = frame.with_column(p, "double", [r["capacity"] * 2 for r in p])
print(w[3]["double"])
"#,
        &lim,
    );
    assert_eq!(r.status, Status::Ok, "{:?}", r.error_message);
    assert_eq!(
        r.log,
        "6 ['id', 'zone', 'capacity', 'geometry']\n\
         ['zone', 'capacity_sum', 'capacity_count', 'id_max']\n\
         z0 13.5 3 6\n\
         z1 18.0 3 7\n\
         z2 22.5 3 8\n\
         [8, 7] ['z0', 'z1', 'z2']\n\
         (9, 2)\n\
         9 North None ['id', 'zone', 'capacity', 'geometry', 'name']\n\
         9.0\n"
    );
}

#[test]
fn geo_operations_projected() {
    let log = ok_log(
        r#"
sq = geo.polygon([(0, 0), (4, 0), (4, 3), (0, 3)], crs="EPSG:2056")
print(geo.area(sq))
line = geo.linestring([(0, 0), (3, 4)], crs="EPSG:2056")
print(geo.length(line))
c = geo.centroid(sq)
print(c.x, c.y, c.kind)
pt = geo.point(1, 1, crs="EPSG:2056")
print(geo.contains(sq, pt), geo.within(pt, sq), geo.intersects(line, sq))
b = geo.buffer(pt, 10)
print(b.kind, round(geo.area(b)))
far = geo.point(10, 3, crs="EPSG:2056")
print(geo.distance(sq, far))
print(geo.intersection(sq, geo.polygon([(2, 0), (6, 0), (6, 3), (2, 3)], crs="EPSG:2056")).wkt)
"#,
    );
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "12.0");
    assert_eq!(lines[1], "5.0");
    assert_eq!(lines[2], "2.0 1.5 Point");
    assert_eq!(lines[3], "True True True");
    // 32-gon inscribed in a radius-10 circle: 0.5 * 32 * 100 * sin(2pi/32)
    let expect = (0.5 * 32.0 * 100.0 * (2.0 * std::f64::consts::PI / 32.0).sin()).round();
    assert_eq!(lines[4], format!("Polygon {expect}"));
    assert_eq!(lines[5], "6.0");
    assert!(lines[6].starts_with("POLYGON"), "{}", lines[6]);
}

#[test]
fn geo_degrees_distance_and_buffer_refusal() {
    let log = ok_log("print(geo.distance(geo.point(0, 0), geo.point(0, 1)))");
    let d: f64 = log.trim().parse().unwrap();
    // R * pi / 180 with R = 6,371,000 m
    let oracle = 6_371_000.0 * std::f64::consts::PI / 180.0;
    assert!((d - oracle).abs() < 0.01, "{d} vs {oracle}");
    assert!((d - 111_194.93).abs() < 0.01);
    assert_eq!(kind_of("geo.buffer(geo.point(8.5, 47.4), 100)"), Some(ErrorKind::TypeMismatch));
    assert_eq!(
        kind_of("geo.distance(geo.point(0, 0), geo.point(0, 0, crs='EPSG:2056'))"),
        Some(ErrorKind::TypeMismatch)
    );
}

#[test]
fn geocode_hits_and_misses() {
    let log = ok_log("hb = geo.geocode('Zürich HB')\nprint(hb.kind, hb.crs)\nprint(geo.geocode('Nowhere Street 99'))");
    assert_eq!(log, "Point EPSG:4326\nNone\n");
}

#[test]
fn overlay_spatial_join() {
    let mut s = Session::new();
    s.register_dataset("p", &points_payload(5)).unwrap();
    let r = s.execute(
        r#"
zone = geo.polygon([(2682990, 1247990), (2683025, 1247990), (2683025, 1248010), (2682990, 1248010)], crs="EPSG:2056")
zones = frame.from_records([{"label": "A", "shape": zone}])
hits = geo.overlay(p, zones, "within")
print(len(hits), hits["id"], hits["label"])
"#,
        &ResourceLimits::default(),
    );
    assert_eq!(r.log, "3 [0, 1, 2] ['A', 'A', 'A']\n", "{:?}", r.error_message);
}

#[test]
fn final_answer_text_terminates() {
    let r = run("final_answer('There are 42 fountains')\nprint('not reached')");
    assert_eq!(r.status, Status::Ok);
    assert_eq!(r.final_answer.as_deref(), Some("There are 42 fountains"));
    assert_eq!(r.log, "");
    assert_eq!(r.artifacts.len(), 1);
    assert_eq!(r.artifacts[0].kind, ArtifactKind::Text);
}

#[test]
fn final_answer_result_list_preserves_order() {
    let r = run(
        r#"final_answer([("table", {"columns": ["a"], "rows": [[1], [2]]}), ("text", "see table")])"#,
    );
    assert_eq!(r.status, Status::Ok, "{:?}", r.error_message);
    let kinds: Vec<ArtifactKind> = r.artifacts.iter().map(|a| a.kind).collect();
    assert_eq!(kinds, vec![ArtifactKind::Table, ArtifactKind::Text]);
    assert_eq!(r.final_answer.as_deref(), Some("see table"));
}

#[test]
fn malformed_final_payload_is_an_error_not_termination() {
    let r = run(r#"final_answer([("plot_spec", {"mark": "pie"}), ("text", "x")])"#);
    assert_eq!(r.status, Status::RuntimeError);
    assert_eq!(r.error_kind, Some(ErrorKind::InvalidFinalAnswer));
    assert!(r.final_answer.is_none());
    assert!(r.artifacts.is_empty());
    assert_eq!(run("final_answer('')").error_kind, Some(ErrorKind::InvalidFinalAnswer));
}

#[test]
fn output_ops_emit_valid_artifacts() {
    let mut s = Session::new();
    s.register_dataset("p", &points_payload(4)).unwrap();
    let r = s.execute(
        r##"
final_table(p, title="Points")
final_plot(p, x="zone", y="capacity", mark="bar", title="Capacity")
final_map({"data": p, "name": "points", "color": "#ff0000"}, title="Map")
"##,
        &ResourceLimits::default(),
    );
    assert_eq!(r.status, Status::Ok, "{:?}", r.error_message);
    assert_eq!(r.artifacts.len(), 3);
    for a in &r.artifacts {
        validate_artifact(a.kind, &a.payload).unwrap();
    }
    let table = &r.artifacts[0].payload;
    assert_eq!(table["rows"][0][3], "POINT (2683000 1248000)");
    let map = &r.artifacts[2].payload;
    let coords = &map["layers"][0]["geojson"]["features"][0]["geometry"]["coordinates"];
    // LV95 near Zurich main station projects to about 8.54 E, 47.38 N
    assert!((coords[0].as_f64().unwrap() - 8.537).abs() < 0.01, "{coords}");
    assert!((coords[1].as_f64().unwrap() - 47.375).abs() < 0.01, "{coords}");
    assert_eq!(map["layers"][0]["crs"], "EPSG:4326");
}

#[test]
fn reachable_names_are_documented() {
    let doc = include_str!("../../../docs/language.md");
    let start = doc.find("<!-- allowlist -->").expect("allowlist marker");
    let end = doc.find("<!-- /allowlist -->").expect("allowlist end marker");
    let documented: std::collections::HashSet<&str> =
        doc[start..end].split(|c: char| c.is_whitespace() || c == '`' || c == ',').filter(|s| !s.is_empty()).collect();
    let names = reachable_names();
    for n in &names {
        assert!(documented.contains(n.as_str()), "undocumented reachable name {n}");
    }
    // nothing with ambient authority is reachable
    for forbidden in ["open", "exec", "eval", "compile", "__import__", "getattr", "setattr", "globals", "locals", "input", "os", "sys", "time", "environ", "socket", "subprocess", "vars", "dir"] {
        assert!(!names.iter().any(|n| n == forbidden || n.ends_with(&format!(".{forbidden}"))), "{forbidden}");
    }
    let s = Session::new();
    let bound: Vec<&str> = s.binding_names().collect();
    assert_eq!(bound, vec!["frame", "geo", "math"]);
    for b in BUILTIN_NAMES {
        assert!(names.contains(&b.to_string()));
    }
}

#[test]
fn sessions_are_isolated() {
    let lim = ResourceLimits::default();
    let mut a = Session::new();
    let mut b = Session::new();
    a.execute("shared = [1]", &lim);
    assert_eq!(b.execute("shared", &lim).error_kind, Some(ErrorKind::NameUndefined));
    b.execute("shared = [2]", &lim);
    a.execute("shared.append(5)", &lim);
    assert_eq!(b.execute("shared", &lim).value.as_deref(), Some("[2]"));
    assert_eq!(a.execute("shared", &lim).value.as_deref(), Some("[1, 5]"));
}

#[test]
fn sessions_run_in_parallel() {
    let handles: Vec<_> = (0..4)
        .map(|i| {
            std::thread::spawn(move || {
                let mut s = Session::new();
                let lim = ResourceLimits::default();
                s.execute(&format!("x = {i}\nfor _ in range(1000):\n    x = x + 1"), &lim);
                s.execute("x", &lim).value
            })
        })
        .collect();
    for (i, h) in handles.into_iter().enumerate() {
        assert_eq!(h.join().unwrap(), Some((1000 + i).to_string()));
    }
}

#[test]
fn remote_executor_stub_reports_unavailable() {
    let mut e: Box<dyn Executor> = Box::new(RemoteExecutor { endpoint: "https://vm.invalid".into() });
    let r = e.execute("print(1)", &ResourceLimits::default());
    assert_eq!(r.status, Status::RuntimeError);
    assert_eq!(r.error_kind, Some(ErrorKind::InternalError));
}

#[test]
fn printed_source_reparses_to_same_tree() {
    let src = include_str!("golden/programs.py");
    for chunk in src.split("### ").skip(1) {
        let body = chunk.split_once('\n').unwrap().1;
        let p = parse(body).unwrap();
        let printed = print_program(&p);
        assert_eq!(parse(&printed).unwrap(), p, "{printed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deterministic_results(n in 0i64..200, m in 1i64..50) {
        let src = format!("acc = []\nfor i in range({n}):\n    acc.append(i % {m})\nprint(sum(acc), len(acc))\nacc");
        let a = run(&src);
        let b = run(&src);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ops_grow_linearly_with_iterations(n in 1u64..400) {
        let body = |k: u64| format!("x = 0\nfor i in range({k}):\n    x = x + i");
        let base = run(&body(0)).ops_used;
        let per = run(&body(1)).ops_used - base;
        let r = run(&body(n));
        prop_assert_eq!(r.ops_used, base + per * n);
    }

    #[test]
    fn cap_halts_within_one_node(cap in 50u64..5000) {
        let lim = ResourceLimits { max_ops: cap, ..Default::default() };
        let r = Session::new().execute("while True:\n    pass", &lim);
        prop_assert_eq!(r.status, Status::ResourceExhausted);
        prop_assert_eq!(r.ops_used, cap);
    }

    #[test]
    fn integer_arithmetic_matches_python_semantics(a in -1000i64..1000, b in -50i64..50) {
        prop_assume!(b != 0);
        let r = run(&format!("print({a} // {b}, {a} % {b})"));
        let q = (a as f64 / b as f64).floor() as i64;
        let m = a - q * b;
        prop_assert_eq!(r.log, format!("{q} {m}\n"));
    }
}
