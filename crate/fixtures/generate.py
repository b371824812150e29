#!/usr/bin/env python3
"""Regenerates the offline fixtures: a synthetic city catalog, the small
benchmark suite with ground truth, the scripted model replay and a large
template suite used to check expansion counts.

Run from anywhere: python3 fixtures/generate.py
Output is deterministic.
"""

import json
import math
import os
import random

ROOT = os.path.dirname(os.path.abspath(__file__))
CATALOG = os.path.join(ROOT, "catalog")
SUITE = os.path.join(ROOT, "suite")
LV95 = "EPSG:2056"

rng = random.Random(20240611)


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def write_json(path, value):
    write(path, json.dumps(value, ensure_ascii=False, indent=2) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        cells = []
        for v in r:
            s = str(v)
            if "," in s or '"' in s:
                s = '"' + s.replace('"', '""') + '"'
            cells.append(s)
        lines.append(",".join(cells))
    write(path, "\n".join(lines) + "\n")


# Districts: four 2 km squares around the old town.
DISTRICTS = [
    (1, "Altstadt", 2682000, 1247000),
    (2, "Enge", 2682000, 1245000),
    (3, "Wiedikon", 2680000, 1245000),
    (4, "Aussersihl", 2680000, 1247000),
]
NAMES = {k: n for k, n, _, _ in DISTRICTS}


def district_of(x, y):
    if x >= 2682000:
        return 1 if y >= 1247000 else 2
    return 4 if y >= 1247000 else 3


def random_point():
    # Half-metre offsets keep points off the district borders.
    x = 2680000 + rng.randrange(40, 3960) + 0.5
    y = 1245000 + rng.randrange(40, 3960) + 0.5
    return x, y


def wkt_point(x, y):
    return f"POINT ({x} {y})"


STREETS = [
    "Bahnhofstrasse", "Limmatquai", "Seestrasse", "Badenerstrasse", "Langstrasse", "Birmensdorferstrasse",
    "Bederstrasse", "Stauffacherstrasse", "Rennweg", "Talstrasse", "Brandschenkestrasse", "Zweierstrasse",
]

POPULATION = {
    (1, 2022): 5790, (1, 2023): 5842, (1, 2024): 5907,
    (2, 2022): 9112, (2, 2023): 9185, (2, 2024): 9301,
    (3, 2022): 50874, (3, 2023): 51236, (3, 2024): 51502,
    (4, 2022): 31788, (4, 2023): 32011, (4, 2024): 32296,
}

datasets = []
data = {}


def add_dataset(meta, payload_file):
    datasets.append((meta, payload_file))


def meta(id, title, summary, categories, fields, date, crs=None):
    m = {
        "id": id,
        "title": title,
        "summary": summary,
        "categories": categories,
        "fields": [{"name": n, "type": t, "description": d} for n, t, d in fields],
        "publication_date": date,
        "source_url": f"https://data.example.org/stadt/{id}",
        "language": "de",
    }
    if crs:
        m["crs"] = crs
    return m


# stadtkreise
features = []
for k, name, x0, y0 in DISTRICTS:
    ring = [[x0, y0], [x0 + 2000, y0], [x0 + 2000, y0 + 2000], [x0, y0 + 2000], [x0, y0]]
    features.append({
        "type": "Feature",
        "properties": {"kreis": k, "kreisname": name},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    })
write_json(os.path.join(CATALOG, "data/stadtkreise.geojson"), {
    "type": "FeatureCollection",
    "crs": {"type": "name", "properties": {"name": LV95}},
    "features": features,
})
add_dataset(meta(
    "stadtkreise", "Stadtkreise",
    "Grenzen der Stadtkreise als Polygone in Schweizer Landeskoordinaten (LV95). Grundlage für räumliche Auswertungen nach Kreis.",
    ["Verwaltung", "Geodaten"],
    [("kreis", "integer", "Nummer des Stadtkreises"), ("kreisname", "text", "Name des Stadtkreises"), ("geometry", "geometry", "Kreisgrenze")],
    "2023-01-15", LV95), "data/stadtkreise.geojson")

# bevoelkerung_kreis
rows = [(j, k, NAMES[k], POPULATION[(k, j)]) for j in (2022, 2023, 2024) for k in (1, 2, 3, 4)]
write_csv(os.path.join(CATALOG, "data/bevoelkerung_kreis.csv"), ["jahr", "kreis", "kreisname", "einwohner"], rows)
data["bevoelkerung_kreis"] = rows
add_dataset(meta(
    "bevoelkerung_kreis", "Bevölkerung nach Stadtkreis",
    "Wirtschaftliche Wohnbevölkerung am Jahresende nach Stadtkreis, 2022 bis 2024.",
    ["Bevölkerung", "Statistik"],
    [("jahr", "integer", "Stichjahr"), ("kreis", "integer", "Nummer des Stadtkreises"), ("kreisname", "text", "Name des Stadtkreises"), ("einwohner", "integer", "Anzahl Einwohnerinnen und Einwohner")],
    "2025-02-10"), "data/bevoelkerung_kreis.csv")


def parking(n, lo, hi, prefix):
    out = []
    for i in range(n):
        x, y = random_point()
        out.append((f"{prefix}{i + 1:03d}", rng.choice(STREETS), district_of(x, y), rng.randint(lo, hi), wkt_point(x, y)))
    return out


pub = parking(40, 5, 60, "P")
dis = parking(15, 1, 3, "B")
for name, rows in (("parkplaetze_oeffentlich", pub), ("parkplaetze_behinderte", dis)):
    write_csv(os.path.join(CATALOG, f"data/{name}.csv"), ["id", "strasse", "kreis", "anzahl", "geometry"], rows)
data["pub"], data["dis"] = pub, dis
park_fields = [
    ("id", "text", "Kennung des Parkierungsfelds"), ("strasse", "text", "Strasse"), ("kreis", "integer", "Stadtkreis"),
    ("anzahl", "integer", "Anzahl Parkplätze"), ("geometry", "geometry", "Lage (LV95)"),
]
add_dataset(meta(
    "parkplaetze_oeffentlich", "Öffentlich zugängliche Parkplätze",
    "Standorte und Anzahl der öffentlich zugänglichen Parkplätze auf Strassen und Plätzen der Stadt.",
    ["Mobilität", "Verkehr"], park_fields, "2024-03-01", LV95), "data/parkplaetze_oeffentlich.csv")
add_dataset(meta(
    "parkplaetze_behinderte", "Parkplätze für Menschen mit Behinderung",
    "Reservierte Behindertenparkplätze mit Standort und Anzahl Felder.",
    ["Mobilität", "Verkehr", "Barrierefreiheit"], park_fields, "2024-03-01", LV95), "data/parkplaetze_behinderte.csv")

# brunnen
GENERA = ["Tilia", "Acer", "Platanus", "Quercus", "Fraxinus", "Aesculus", "Carpinus"]
fountains = []
for i in range(37):
    x, y = random_point()
    art = "Trinkwasser" if rng.random() < 0.7 else "Quellwasser"
    fountains.append((i + 1, f"Brunnen {i + 1}", art, x, y))
write_json(os.path.join(CATALOG, "data/brunnen.geojson"), {
    "type": "FeatureCollection",
    "crs": {"type": "name", "properties": {"name": LV95}},
    "features": [
        {"type": "Feature", "properties": {"nr": n, "name": nm, "wasserart": a}, "geometry": {"type": "Point", "coordinates": [x, y]}}
        for n, nm, a, x, y in fountains
    ],
})
data["brunnen"] = fountains
add_dataset(meta(
    "brunnen", "Brunnen",
    "Öffentliche Brunnen der Wasserversorgung mit Standort und Wasserart (Trinkwasser oder Quellwasser).",
    ["Umwelt", "Wasser"],
    [("nr", "integer", "Brunnennummer"), ("name", "text", "Bezeichnung"), ("wasserart", "text", "Trinkwasser oder Quellwasser"), ("geometry", "geometry", "Standort (LV95)")],
    "2024-05-20", LV95), "data/brunnen.geojson")

# baumkataster
trees = []
for i in range(120):
    # More trees in the small districts so the per-capita ranking is not trivial.
    while True:
        x, y = random_point()
        k = district_of(x, y)
        if k in (1, 2) or rng.random() < 0.5:
            break
    trees.append((f"T{i + 1:04d}", rng.choice(GENERA), rng.randint(1950, 2022), k, wkt_point(x, y)))
write_csv(os.path.join(CATALOG, "data/baumkataster.csv"), ["baum_id", "gattung", "pflanzjahr", "kreis", "geometry"], trees)
data["trees"] = trees
add_dataset(meta(
    "baumkataster", "Baumkataster",
    "Inventar der Strassen- und Parkbäume mit Gattung, Pflanzjahr, Stadtkreis und Standort.",
    ["Umwelt", "Stadtgrün"],
    [("baum_id", "text", "Baumnummer"), ("gattung", "text", "Botanische Gattung"), ("pflanzjahr", "integer", "Pflanzjahr"), ("kreis", "integer", "Stadtkreis"), ("geometry", "geometry", "Standort (LV95)")],
    "2024-09-02", LV95), "data/baumkataster.csv")

# velozaehlung
import datetime
velo = []
day = datetime.date(2024, 1, 1)
while day <= datetime.date(2024, 3, 31):
    for station in ("Mythenquai", "Langstrasse"):
        velo.append((day.isoformat(), station, rng.randint(150, 900)))
    day += datetime.timedelta(days=1)
write_csv(os.path.join(CATALOG, "data/velozaehlung.csv"), ["datum", "station", "anzahl_velo"], velo)
data["velo"] = velo
add_dataset(meta(
    "velozaehlung", "Velozählungen",
    "Tägliche Anzahl Velos an automatischen Zählstellen, Januar bis März 2024.",
    ["Mobilität", "Velo"],
    [("datum", "date", "Zähltag"), ("station", "text", "Zählstelle"), ("anzahl_velo", "integer", "Gezählte Velos pro Tag")],
    "2024-04-05"), "data/velozaehlung.csv")

# tramlinien
trams = []
for linie, name in ((2, "Bahnhof - Wiedikon"), (4, "Altstadt - Enge"), (7, "Aussersihl - Enge"), (9, "Ring")):
    x, y = random_point()
    coords = [[x, y]]
    for _ in range(rng.randint(5, 8)):
        x = min(max(x + rng.randrange(-700, 700) + 0.5, 2680010.0), 2683990.0)
        y = min(max(y + rng.randrange(-700, 700) + 0.5, 1245010.0), 1248990.0)
        coords.append([x, y])
    trams.append((linie, name, coords))
write_json(os.path.join(CATALOG, "data/tramlinien.geojson"), {
    "type": "FeatureCollection",
    "crs": {"type": "name", "properties": {"name": LV95}},
    "features": [
        {"type": "Feature", "properties": {"linie": l, "bezeichnung": n}, "geometry": {"type": "LineString", "coordinates": c}}
        for l, n, c in trams
    ],
})
data["trams"] = trams
add_dataset(meta(
    "tramlinien", "Tramnetz",
    "Linienführung der Tramlinien als Linien in LV95 mit Liniennummer und Bezeichnung.",
    ["Mobilität", "Öffentlicher Verkehr"],
    [("linie", "integer", "Liniennummer"), ("bezeichnung", "text", "Bezeichnung"), ("geometry", "geometry", "Linienführung")],
    "2023-12-10", LV95), "data/tramlinien.geojson")

# Distractors.
write_csv(os.path.join(CATALOG, "data/wetter_messstationen.csv"), ["station", "datum", "temperatur_c"],
          [(s, f"2024-0{m}-15", round(rng.uniform(-3, 22), 1)) for s in ("Fluntern", "Kloten") for m in range(1, 7)])
add_dataset(meta(
    "wetter_messstationen", "Wetter an Messstationen",
    "Monatliche Lufttemperatur an Messstationen in und um die Stadt.",
    ["Umwelt", "Klima"],
    [("station", "text", "Messstation"), ("datum", "date", "Messtag"), ("temperatur_c", "real", "Lufttemperatur in Grad Celsius")],
    "2024-07-01"), "data/wetter_messstationen.csv")

write_csv(os.path.join(CATALOG, "data/schulhaeuser.csv"), ["schulhaus", "kreis", "schueler"],
          [(f"Schulhaus {n}", k, rng.randint(120, 620)) for n, k in (("Hirschengraben", 1), ("Gabler", 2), ("Bühl", 3), ("Kern", 4), ("Aemtler", 3))])
add_dataset(meta(
    "schulhaeuser", "Schulhäuser der Volksschule",
    "Schulhäuser mit Stadtkreis und Anzahl Schülerinnen und Schüler.",
    ["Bildung"],
    [("schulhaus", "text", "Name des Schulhauses"), ("kreis", "integer", "Stadtkreis"), ("schueler", "integer", "Anzahl Schülerinnen und Schüler")],
    "2024-08-20"), "data/schulhaeuser.csv")

rows = []
for i in range(12):
    x, y = random_point()
    rows.append((f"Sammelstelle {i + 1}", district_of(x, y), rng.choice(["Glas", "Metall", "Öl", "Textilien"]), wkt_point(x, y)))
write_csv(os.path.join(CATALOG, "data/abfall_sammelstellen.csv"), ["name", "kreis", "typ", "geometry"], rows)
add_dataset(meta(
    "abfall_sammelstellen", "Abfallsammelstellen",
    "Standorte der Sammelstellen für Glas, Metall, Öl und Textilien.",
    ["Entsorgung"],
    [("name", "text", "Bezeichnung"), ("kreis", "integer", "Stadtkreis"), ("typ", "text", "Sammelgut"), ("geometry", "geometry", "Standort (LV95)")],
    "2024-02-14", LV95), "data/abfall_sammelstellen.csv")

write_csv(os.path.join(CATALOG, "data/hundebestand.csv"), ["jahr", "kreis", "hunde"],
          [(j, k, rng.randint(150, 900)) for j in (2023, 2024) for k in (1, 2, 3, 4)])
add_dataset(meta(
    "hundebestand", "Hundebestand",
    "Registrierte Hunde nach Stadtkreis und Jahr.",
    ["Tiere", "Statistik"],
    [("jahr", "integer", "Stichjahr"), ("kreis", "integer", "Stadtkreis"), ("hunde", "integer", "Anzahl registrierter Hunde")],
    "2025-01-20"), "data/hundebestand.csv")

write_csv(os.path.join(CATALOG, "data/steuerertrag.csv"), ["jahr", "steuerertrag_chf"],
          [(j, rng.randint(2_800_000_000, 3_400_000_000)) for j in range(2015, 2025)])
add_dataset(meta(
    "steuerertrag", "Steuerertrag der Stadt",
    "Jährlicher Steuerertrag natürlicher und juristischer Personen in Franken.",
    ["Finanzen"],
    [("jahr", "integer", "Rechnungsjahr"), ("steuerertrag_chf", "integer", "Steuerertrag in CHF")],
    "2025-04-01"), "data/steuerertrag.csv")

write_csv(os.path.join(CATALOG, "data/stromverbrauch.csv"), ["jahr", "monat", "verbrauch_mwh"],
          [(2024, m, rng.randint(180_000, 260_000)) for m in range(1, 13)])
add_dataset(meta(
    "stromverbrauch", "Stromverbrauch",
    "Monatlicher Stromverbrauch im Stadtgebiet in Megawattstunden.",
    ["Energie"],
    [("jahr", "integer", "Jahr"), ("monat", "integer", "Monat"), ("verbrauch_mwh", "integer", "Verbrauch in MWh")],
    "2025-01-31"), "data/stromverbrauch.csv")

manifest = []
for m, payload in datasets:
    write_json(os.path.join(CATALOG, f"metadata/{m['id']}.json"), m)
    manifest.append({"metadata": f"metadata/{m['id']}.json", "payload": payload})
write_json(os.path.join(CATALOG, "manifest.json"), manifest)

# A dataset whose payload is missing, for failure-path tests.
broken = meta("baustellen", "Baustellen", "Aktuelle Baustellen im Strassenraum.", ["Verkehr"],
              [("ort", "text", "Ort"), ("bis", "date", "Voraussichtliches Ende")], "2024-06-01")
write_json(os.path.join(CATALOG, "metadata/baustellen.json"), broken)
write_json(os.path.join(CATALOG, "manifest_broken.json"), manifest + [{"metadata": "metadata/baustellen.json", "payload": "data/baustellen.csv"}])

# ---------------------------------------------------------------------------
# Ground truth, computed here independently of the engine.

fountain_count = len(fountains)
share = round(sum(r[3] for r in dis) / sum(r[3] for r in pub) * 100, 2)
tree_counts = {k: 0 for k in NAMES}
for t in trees:
    tree_counts[t[3]] += 1
per_capita = {k: tree_counts[k] / POPULATION[(k, 2024)] for k in NAMES}
best_kreis = NAMES[max(per_capita, key=per_capita.get)]


def line_km(coords):
    return round(sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(coords, coords[1:])) / 1000, 2)


tram_km = {l: line_km(c) for l, _, c in trams}
velo_feb = sum(n for d, s, n in velo if s == "Mythenquai" and d.startswith("2024-02"))
velo_jan = sum(n for d, s, n in velo if s == "Mythenquai" and d.startswith("2024-01"))
drink_wiedikon = sum(1 for _, _, a, x, y in fountains if a == "Trinkwasser" and district_of(x, y) == 3)

# ---------------------------------------------------------------------------
# Suite templates and ground-truth scripts.

RET_USAGE = {"input_tokens": 1000, "output_tokens": 50, "reasoning_tokens": 0}
ANA_USAGE = {"input_tokens": 3000, "output_tokens": 200, "reasoning_tokens": 0}

templates = [
    {
        "id": "t01",
        "text_template": "Wie viele Brunnen gibt es in der Stadt Zürich?",
        "relevant_dataset_ids": ["brunnen"],
        "ground_truth": str(fountain_count),
        "category": "count",
        "required_ops": ["count"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t02",
        "text_template": "Wie viele Einwohner hatte der Stadtkreis {kreisname} im Jahr {jahr}?",
        "bindings": [
            {"kreisname": "Enge", "kreis": 2, "jahr": 2023, "einwohner": POPULATION[(2, 2023)]},
            {"kreisname": "Wiedikon", "kreis": 3, "jahr": 2024, "einwohner": POPULATION[(3, 2024)]},
        ],
        "relevant_dataset_ids": ["bevoelkerung_kreis"],
        "ground_truth": "{einwohner}",
        "category": "lookup",
        "required_ops": ["filter"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t03",
        "text_template": "Wie viel Prozent der öffentlichen Parkplätze entsprechen die Parkplätze für Menschen mit Behinderung?",
        "relevant_dataset_ids": ["parkplaetze_oeffentlich", "parkplaetze_behinderte"],
        "ground_truth": f"{share}",
        "category": "ratio",
        "required_ops": ["sum", "ratio"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t04",
        "text_template": "Welcher Stadtkreis hatte 2024 am meisten Bäume pro Einwohner?",
        "relevant_dataset_ids": ["baumkataster", "bevoelkerung_kreis"],
        "ground_truth": best_kreis,
        "category": "ranking",
        "required_ops": ["group_by", "join", "ratio", "sort"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t05",
        "text_template": "Wie lang ist die Tramlinie {linie} in Kilometern?",
        "bindings": [{"linie": 2, "km": tram_km[2]}, {"linie": 4, "km": tram_km[4]}],
        "relevant_dataset_ids": ["tramlinien"],
        "ground_truth": "{km}",
        "category": "geometry",
        "required_ops": ["filter", "length"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t06",
        "text_template": "Wie viele Velos wurden im Februar 2024 an der Zählstelle Mythenquai gezählt?",
        "relevant_dataset_ids": ["velozaehlung"],
        "ground_truth": str(velo_feb),
        "category": "aggregate",
        "required_ops": ["filter", "sum"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t07",
        "text_template": "Wie viele Trinkwasserbrunnen stehen im Stadtkreis Wiedikon?",
        "relevant_dataset_ids": ["brunnen", "stadtkreise"],
        "ground_truth": str(drink_wiedikon),
        "category": "spatial",
        "required_ops": ["overlay", "filter", "count"],
        "script": "scripts/{question_id}.py",
    },
    {
        "id": "t08",
        "text_template": "Wie viele {tier} leben im Zoo Zürich?",
        "bindings": [{"tier": "Einhörner"}, {"tier": "Drachen"}],
        "negative": True,
        "category": "negative",
    },
    {
        "id": "t09",
        "text_template": "Wie hoch war der Bitcoin-Kurs am 1. Januar 2024?",
        "negative": True,
        "category": "negative",
    },
]


def code(src):
    return "```python\n" + src.strip("\n") + "\n```"


def step(plan, src, expect=None):
    t = {"content": plan + "\n\n" + code(src), "usage": ANA_USAGE}
    if expect:
        t["expect"] = expect
    return t


def tram_filter(linie):
    return f'''def ist_linie(r):
    return r["linie"] == {linie}
linie = frame.filter(tramlinien, ist_linie)[0]
km = round(geo.length(linie["geometry"]) / 1000, 2)
'''


def pop_filter(kreis, jahr):
    return f'''def passt(r):
    return r["kreis"] == {kreis} and r["jahr"] == {jahr}
zeile = frame.filter(bevoelkerung_kreis, passt)[0]
'''


TREES_1 = '''anzahl = frame.group_by(baumkataster, "kreis").agg({"baum_id": "count"})
print(anzahl)
'''
TREES_2 = '''def ist_2024(r):
    return r["jahr"] == 2024
pop = frame.filter(bevoelkerung_kreis, ist_2024)
j = frame.join(anzahl, pop, "kreis")
def pro_kopf(r):
    return r["baum_id_count"] / r["einwohner"]
j = frame.with_column(j, "pro_kopf", pro_kopf)
top = frame.sort(j, "pro_kopf", descending=True)[0]
final_answer(f"Am meisten Bäume pro Einwohner hat der Stadtkreis {top['kreisname']} ({round(top['pro_kopf'] * 1000, 1)} Bäume pro 1000 Einwohner).")
'''
PARK_1 = '''p = sum(parkplaetze_oeffentlich["anzahl"])
b = sum(parkplaetze_behinderte["anzahl"])
print(p, b)
'''
PARK_2 = '''anteil = round(b / p * 100, 2)
final_answer(f"Die {b} Behindertenparkplätze entsprechen {anteil} % der {p} öffentlichen Parkplätze.")
'''
FOUNT_1 = '''print(len(brunnen))
print(brunnen.columns)
'''
FOUNT_2 = '''final_answer(f"In der Stadt Zürich gibt es {len(brunnen)} öffentliche Brunnen.")
'''
DRINK_1 = '''j = geo.overlay(brunnen, stadtkreise, predicate="within")
print(len(j), j.columns)
'''
DRINK_2 = '''def trinkwasser_wiedikon(r):
    return r["wasserart"] == "Trinkwasser" and r["kreisname"] == "Wiedikon"
n = len(frame.filter(j, trinkwasser_wiedikon))
final_answer(f"Im Stadtkreis Wiedikon stehen {n} Trinkwasserbrunnen.")
'''


def velo_code(month, label):
    return f'''def passt(r):
    return r["station"] == "Mythenquai" and r["datum"].startswith("2024-{month}")
total = sum(frame.filter(velozaehlung, passt)["anzahl_velo"])
final_answer(f"Im {label} 2024 wurden am Mythenquai {{total}} Velos gezählt.")
'''


# Analysis replies per question id: list of (plan, code, expectations).
analysis_steps = {
    "t01": [
        ("Ich zähle zuerst die Zeilen des Datensatzes.", FOUNT_1, None),
        ("Jeder Eintrag ist ein Brunnen.", FOUNT_2, [{"last_message_contains": str(fountain_count)}]),
    ],
    "t02-1": [("Ich suche die Zeile für Kreis 2 im Jahr 2023.", pop_filter(2, 2023) + 'final_answer(f"Der Stadtkreis Enge hatte 2023 {zeile[\'einwohner\']} Einwohner.")\n', None)],
    "t02-2": [("Ich suche die Zeile für Kreis 3 im Jahr 2024.", pop_filter(3, 2024) + 'final_answer(f"Der Stadtkreis Wiedikon hatte 2024 {zeile[\'einwohner\']} Einwohner.")\n', None)],
    "t03": [
        ("Ich summiere die Parkplätze beider Datensätze.", PARK_1, None),
        ("Jetzt berechne ich den Anteil.", PARK_2, None),
    ],
    "t04": [
        ("Ich zähle die Bäume pro Stadtkreis.", TREES_1, None),
        ("Ich verbinde die Zählung mit der Bevölkerung 2024.", TREES_2, None),
    ],
    "t05-1": [("Ich messe die Länge der Linie 2.", tram_filter(2) + 'final_answer(f"Die Tramlinie 2 ist {km} km lang.")\n', None)],
    "t05-2": [
        ("Ich messe die Länge der Linie 4.", 'print(geo.length(tramlinie["geometry"]))\n', None),
        ("Die Variable heisst anders; ich filtere zuerst die Linie.", tram_filter(4) + "print(km)\n",
         [{"last_message_contains": "NameUndefined"}]),
        ("Die Länge ist berechnet.", 'final_answer(f"Die Tramlinie 4 ist {km} km lang.")\n', None),
    ],
    # Deliberately sums the wrong month.
    "t06": [("Ich summiere die Tageszählungen am Mythenquai.", velo_code("01", "Februar"), None)],
    "t07": [
        ("Ich ordne die Brunnen den Stadtkreisen zu.", DRINK_1, None),
        ("Jetzt filtere ich Trinkwasserbrunnen in Wiedikon.", DRINK_2, None),
    ],
}
ground_truth_scripts = {
    "t01": FOUNT_1 + FOUNT_2,
    "t02-1": analysis_steps["t02-1"][0][1],
    "t02-2": analysis_steps["t02-2"][0][1],
    "t03": PARK_1 + PARK_2,
    "t04": TREES_1 + TREES_2,
    "t05-1": analysis_steps["t05-1"][0][1],
    "t05-2": tram_filter(4) + 'final_answer(f"Die Tramlinie 4 ist {km} km lang.")\n',
    "t06": velo_code("02", "Februar"),
    "t07": DRINK_1 + DRINK_2,
}


def search(query):
    return {"name": "search_datasets", "arguments": {"query": query}}


def report(ids, why):
    return {"name": "report_results", "arguments": {"dataset_ids": ids, "justification": why}}


def rturn(call, expect=None):
    t = {"tool_calls": [call], "usage": RET_USAGE}
    if expect:
        t["expect"] = expect
    return t


def hit(id):
    return [{"last_tool_result_contains": id}]


# Retrieval replies per question id.
retrieval_turns = {
    "t01": [rturn(search("Brunnen Standorte")), rturn(report(["brunnen"], "Der Datensatz listet alle Brunnen."), hit("brunnen"))],
    "t02-1": [rturn(search("Bevölkerung nach Stadtkreis")), rturn(report(["bevoelkerung_kreis"], "Einwohner pro Kreis und Jahr."), hit("bevoelkerung_kreis"))],
    "t02-2": [rturn(search("Einwohner Stadtkreis Jahr")), rturn(report(["bevoelkerung_kreis"], "Einwohner pro Kreis und Jahr."), hit("bevoelkerung_kreis"))],
    "t03": [
        rturn(search("Parkplätze für Menschen mit Behinderung")),
        rturn(search("öffentlich zugängliche Parkplätze"), hit("parkplaetze_behinderte")),
        rturn(report(["parkplaetze_oeffentlich", "parkplaetze_behinderte", "stadtkreise"], "Beide Parkplatzdatensätze, dazu die Kreise."), hit("parkplaetze_oeffentlich")),
    ],
    # Misses the population dataset.
    "t04": [
        rturn(search("Baumkataster Bäume")),
        rturn(search("Bevölkerung nach Stadtkreis"), hit("baumkataster")),
        rturn(report(["baumkataster"], "Die Bäume sind mit Kreis erfasst.")),
    ],
    "t05-1": [rturn(search("Tramlinien Linienführung")), rturn(report(["tramlinien"], "Linien mit Geometrie."), hit("tramlinien"))],
    # Reports an id that is not in the catalog; it is dropped.
    "t05-2": [rturn(search("Tramnetz")), rturn(report(["tramlinien", "tram_fahrplan_2030"], "Linien mit Geometrie."), hit("tramlinien"))],
    # Adds a distractor.
    "t06": [rturn(search("Velozählungen Zählstellen")), rturn(report(["velozaehlung", "wetter_messstationen"], "Zählungen, dazu das Wetter."), hit("velozaehlung"))],
    # Runs into the subquery budget.
    "t07": [
        rturn(search("Trinkwasserbrunnen")),
        rturn(search("Stadtkreise Grenzen")),
        rturn(search("Brunnen Wiedikon")),
        rturn(search("Brunnen Quartier")),
        rturn(report(["brunnen", "stadtkreise"], "Brunnen und Kreisgrenzen für die räumliche Zuordnung."),
              [{"last_tool_result_contains": "limit of 3 searches"}]),
    ],
    "t08-1": [rturn(search("Zoo Tiere Einhörner")), rturn(report([], "Kein Datensatz beschreibt Zootiere."))],
    # Spurious retrieval on a negative question.
    "t08-2": [rturn(search("Zoo Tiere Drachen")), rturn(report(["hundebestand"], "Tierbestand nach Kreis."))],
    "t09": [rturn(search("Bitcoin Kurs")), rturn(report([], "Keine Finanzmarktdaten im Katalog."))],
}


def expand_text(t, b):
    s = t["text_template"]
    for k, v in b.items():
        s = s.replace("{" + k + "}", str(v))
    return s


questions = []
for t in templates:
    bs = t.get("bindings") or [{}]
    for i, b in enumerate(bs):
        qid = t["id"] if len(bs) == 1 else f"{t['id']}-{i + 1}"
        questions.append((qid, expand_text(t, b), t))

conversations = []
# Follow-up turns of the demo conversation come first: their first user
# message also contains the earlier question.
FOLLOWUP_ANALYSIS = "Und wie viele davon liefern Trinkwasser?"
FOLLOWUP_RETRIEVAL = "Gibt es auch Daten zum Hundebestand?"
drink_total = sum(1 for f in fountains if f[2] == "Trinkwasser")
conversations.append({"match": "Follow-up question: " + FOLLOWUP_ANALYSIS, "system": "You coordinate", "turns": [
    {"tool_calls": [{"name": "route", "arguments": {"target": "analysis", "rationale": "Die Brunnendaten sind bereits geladen."}}],
     "usage": {"input_tokens": 400, "output_tokens": 20, "reasoning_tokens": 0}}]})
conversations.append({"match": "Follow-up question: " + FOLLOWUP_RETRIEVAL, "system": "You coordinate", "turns": [
    {"tool_calls": [{"name": "route", "arguments": {"target": "retrieval", "rationale": "Hunde sind nicht in den geladenen Daten."}}],
     "usage": {"input_tokens": 400, "output_tokens": 20, "reasoning_tokens": 0}}]})
conversations.append({"match": "Question: " + FOLLOWUP_ANALYSIS, "system": "data analyst", "turns": [
    step("Die Variable brunnen ist noch geladen; ich filtere nach Wasserart.",
         'def trink(r):\n    return r["wasserart"] == "Trinkwasser"\nfinal_answer(f"{len(frame.filter(brunnen, trink))} Brunnen liefern Trinkwasser.")\n')]})
conversations.append({"match": FOLLOWUP_RETRIEVAL, "system": "dataset retrieval assistant", "turns": [
    rturn(search("Hundebestand")), rturn(report(["hundebestand"], "Registrierte Hunde nach Kreis."), hit("hundebestand"))]})
conversations.append({"match": "Question: " + FOLLOWUP_RETRIEVAL, "system": "data analyst", "turns": [
    step("Ich summiere die Hunde 2024.",
         'def j(r):\n    return r["jahr"] == 2024\nfinal_answer(f"2024 waren {sum(frame.filter(hundebestand, j)[\'hunde\'])} Hunde registriert; dazu gibt es {len(brunnen)} Brunnen.")\n')]})

for qid, text, t in questions:
    conversations.append({"match": text, "system": "dataset retrieval assistant", "turns": retrieval_turns[qid]})
    if not t.get("negative"):
        turns = [step(p, c, e) for p, c, e in analysis_steps[qid]]
        conversations.append({"match": "Question: " + text, "system": "data analyst", "turns": turns})

write_json(os.path.join(ROOT, "scripted/replay.json"), {"conversations": conversations})

suite_entries = []
for t in templates:
    write_json(os.path.join(SUITE, f"templates/{t['id']}.json"), t)
    suite_entries.append(f"templates/{t['id']}.json")
write_json(os.path.join(SUITE, "suite.json"), {"name": "city-mini", "templates": suite_entries})
for qid, src in ground_truth_scripts.items():
    write(os.path.join(SUITE, f"scripts/{qid}.py"), src)

write_json(os.path.join(ROOT, "expected_answers.json"), {
    "fountains": fountain_count,
    "fountains_drinking_water": drink_total,
    "parking_share_pct": share,
    "trees_per_capita_top": best_kreis,
    "tram_km": {str(k): v for k, v in tram_km.items()},
    "velo_mythenquai_feb": velo_feb,
    "velo_mythenquai_jan": velo_jan,
    "drinking_fountains_wiedikon": drink_wiedikon,
})

# ---------------------------------------------------------------------------
# Large template suite: 70 templates, 169 positive and 30 negative questions.

big_rng = random.Random(7)
big = []
positives_left = 169
for i in range(60):
    n = 3 if i < 49 else 2  # 49 * 3 + 11 * 2 = 169
    big.append({
        "id": f"p{i + 1:02d}",
        "text_template": "Wie viele {thing} gibt es im Stadtkreis {district}?",
        "bindings": [{"thing": f"Objekte{i}-{j}", "district": big_rng.choice(list(NAMES.values())), "n": big_rng.randint(1, 500)} for j in range(n)],
        "relevant_dataset_ids": [f"ds_{i:03d}"],
        "ground_truth": "{n}",
        "category": "count",
        "required_ops": ["count"],
    })
    positives_left -= n
assert positives_left == 0
for i in range(10):
    big.append({
        "id": f"n{i + 1:02d}",
        "text_template": "Wie viele {thing} gibt es auf dem Mond?",
        "bindings": [{"thing": f"Dinge{i}-{j}"} for j in range(3)],
        "negative": True,
        "category": "negative",
    })
write_json(os.path.join(ROOT, "suite_large/templates.json"), big)
write_json(os.path.join(ROOT, "suite_large/suite.json"), {"name": "large-expansion", "templates": ["templates.json"]})

print(json.dumps({"datasets": len(datasets), "questions": len(questions), "conversations": len(conversations)}))
