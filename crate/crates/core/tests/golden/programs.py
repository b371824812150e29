### arithmetic
print(7 // 2, -7 // 2, 7 % 3, -7 % 3, 7 % -3, 2 ** 10, 2 ** -1, 7 / 2)
print(-7.5 // 2, -7.5 % 2, 5.0 % -3, 1e308 * 10, -0.0)
### float_repr
print(0.1 + 0.2, 1/3, 1e16, 1e-5, 123456789.123, 2.5e-7, 1e22, float(10**15))
print(repr(1.0), str(100.0), 3.14159, -2.0e-4)
### rounding
print(round(2.5), round(3.5), round(-2.5), round(2.675, 2), round(1234, -2), round(0.125, 2), round(7.0))
### strings
s = "Hello, World"
print(s.lower(), s.upper(), s[1:5], s[::-1], s[-3:], len(s))
print(s.split(", "), "  a b  c ".split(), "a,b,,c".split(","), "x y z".split(None, 1))
print("-".join(["a", "b", "c"]), s.replace("l", "L", 2), s.find("World"), s.count("l"))
print(s.startswith("Hell"), s.endswith(("x", "ld")), "  pad  ".strip(), "xxhixx".strip("x"), "hello world".title())
### fstrings
x = 3.14159
n = 1234567
print(f"{x:.2f} {x:8.3f}| {n:,} {n:>10}| {n:<10}| {'s':^5}| {x:e} {x:.1%} {n:08d}")
print(f"{x!r} {'q'!r}")
print(f"{{literal}} {n + 1} {[1, 2][0]} {-x:+.1f} {0.5:g} {1e-7:g} {123456789.0:g}")
### lists
a = [3, 1, 2]
a.append(5)
a.extend([0, 4])
a.insert(1, 9)
print(a, a.pop(), a.pop(0), a)
a.sort()
print(a, sorted(a, reverse=True), a.index(5), a.count(2), a[1:-1], a[::2])
a.reverse()
a.remove(9)
print(a, a * 2, [0] * 3, a + [7], 5 in a, 8 not in a)
### dicts
d = {"b": 2, "a": 1}
d["c"] = 3
print(d, list(d.keys()), list(d.values()), list(d.items()), d.get("z"), d.get("z", 0))
print(d.pop("b"), d, d.setdefault("e", 5), d, len(d), "a" in d)
d.update({"a": 10}, f=6)
print(d, {k: v * 2 for k, v in d.items() if v > 3}, dict([("x", 1)]), {1: "a", 1.0: "b", True: "c"})
### tuples
t = (1, "two", 3.0)
p, q, r = t
print(t, p, q, r, t[1], t[-1], t[:2], len(t), (1,), ())
print(t.index("two"), t.count(1), (1, 2) < (1, 3), (1, 2) == (1, 2), [1, 2] < [1, 2, 0])
### comprehensions
print([i * i for i in range(10) if i % 2 == 0])
print({i: str(i) for i in range(3)}, sum(x for x in range(5)), [c for c in "abc"])
print([(i, j) for i, j in enumerate("xy")], list(zip([1, 2, 3], "ab")))
### loops
total = 0
for i in range(100):
    if i % 7 == 0:
        continue
    if i > 50:
        break
    total += i
print(total)
k = 0
while k < 10:
    k += 3
print(k)
for i, ch in enumerate("abc", start=1):
    print(i, ch, end="; ")
print()
### functions
def fib(n):
    if n < 2:
        return n
    return fib(n - 1) + fib(n - 2)
print([fib(i) for i in range(15)])
def greet(name, greeting="Hello"):
    return f"{greeting}, {name}!"
print(greet("Ada"), greet("Bob", greeting="Hi"), greet(greeting="Yo", name="Cy"))
### closures
def make_adder(n):
    def add(x):
        return x + n
    return add
add5 = make_adder(5)
print(add5(10), make_adder(-1)(1))
def counter():
    counts = {"n": 0}
    def inc():
        counts["n"] += 1
        return counts["n"]
    return inc
c = counter()
c()
c()
print(c())
### builtins
print(len([1, 2]), min(3, 1, 2), max([4, 9, 2]), min("bca"), max([-4, 3], key=abs))
print(sum([1, 2, 3]), sum([0.1] * 10), sum([], 10), abs(-3), abs(-2.5), int("42"), int(3.9), int(-3.9), float("1.5"), float(2))
print(str(12), str([1, "a"]), bool(0), bool([]), bool("x"), list(range(2, 10, 3)), list(range(5, 0, -2)), tuple([1, 2]))
print(any([0, 0, 1]), all([1, 1, 0]), list(reversed([1, 2, 3])), sorted(["b", "A", "a"]), sorted([(2, "b"), (1, "z"), (2, "a")]))
### truthiness
for v in [0, 1, "", "a", [], [0], {}, None, 0.0, range(0)]:
    print(bool(v), end=" ")
print()
print(1 and 2, 0 and 2, 0 or "x", "" or 0, not None, None is None, [] is not None)
### chained_comparisons
x = 5
print(1 < x < 10, 1 < x > 10, x == 5 == 5.0, 1 <= 1 < 2 != 3, "a" < "b" < "c")
### nested_data
data = [{"name": "a", "v": 3}, {"name": "b", "v": 1}, {"name": "c", "v": 2}]
def by_value(r):
    return r["v"]
print([r["name"] for r in sorted(data, key=by_value)], max(data, key=by_value)["name"])
grid = [[i * j for j in range(3)] for i in range(3)]
print(grid, grid[2][1], [row[-1] for row in grid])
### string_formatting_misc
print(str(1e100), str(-1.5e-10), repr("a\nb"), repr("it's"), repr('say "hi"'), str(None), str(True))
print(f"{True} {None} {[1.0, 'x']} {(1,)} {3:5}|{'ab':<4}|{'ab':>4}|{7:^7}|{-3:05d}|{1.5:08.3f}")
### integer_edge
print(2 ** 62, -(2 ** 62) * 2, 10 ** 18, 9999999999 * 99999999, 17 // -5, -17 % 5, (17 // 5, 17 % 5))
### float_ops
import math
print(math.sqrt(2), math.floor(-2.5), math.ceil(2.1), math.pi, math.e, math.log(100, 10), math.log10(1000), math.exp(1))
print(math.sin(0), math.cos(0), math.atan2(1, 1), math.radians(180), math.degrees(math.pi), math.hypot(3, 4), math.fabs(-2))
print(math.isnan(float("nan")), math.inf, -math.inf, float("inf") > 1e308)
### slicing
s = list(range(10))
print(s[2:8:2], s[-3:], s[:-7], s[::-3], s[8:2:-2], s[100:], s[-100:2], "abcdef"[1::2], (1, 2, 3, 4)[::-1])
### while_else_free
n = 27
steps = 0
while n != 1:
    n = n // 2 if n % 2 == 0 else 3 * n + 1
    steps += 1
print(steps)
### primes
primes = []
for cand in range(2, 60):
    is_p = True
    for p in primes:
        if p * p > cand:
            break
        if cand % p == 0:
            is_p = False
            break
    if is_p:
        primes.append(cand)
print(primes, len(primes))
### aggregation
rows = [("z1", 3), ("z2", 5), ("z1", 4), ("z3", 1), ("z2", 2)]
totals = {}
for zone, v in rows:
    totals[zone] = totals.get(zone, 0) + v
print(totals, sorted(totals.items()))
best = max(totals, key=totals.get)
print(best, totals[best], sum(totals.values()) / len(totals))
### mean_median
vals = [5, 3, 9, 1, 7, 2]
vals_sorted = sorted(vals)
mid = len(vals_sorted) // 2
median = (vals_sorted[mid - 1] + vals_sorted[mid]) / 2
print(sum(vals) / len(vals), median, f"{sum(vals) / len(vals):.3f}")
### string_building
out = ""
for i in range(5):
    out += str(i) * i
print(out, len(out), out.isdigit(), "abc".isalpha(), "a1".isalpha())
### nested_functions_recursion
def depth(xs):
    best = 0
    for x in xs:
        if x == []:
            best = max(best, 1)
        else:
            best = max(best, 1 + depth(x))
    return best
print(depth([[], [[]], [[[[]]]]]))
### default_args_evaluated_once
def f(x, acc=[]):
    acc.append(x)
    return acc
f(1)
print(f(2))
### aliasing
a = [1, 2]
b = a
b.append(3)
c = a[:]
c.append(4)
print(a, b, c, a is b, a is c, a == b)
### unpacking
a, b = 1, 2
a, b = b, a
(x, y), z = (3, 4), 5
print(a, b, x, y, z)
for k, (m, n) in [("p", (1, 2)), ("q", (3, 4))]:
    print(k, m + n, end=" ")
print()
### print_sep_end
print("a", "b", sep="-", end="!\n")
print(1, 2, 3, sep="")
print()
print("x", None, 1.0)
### augassign_variants
x = 10
x -= 3
x *= 4
x //= 3
x **= 2
x %= 50
y = 7.0
y /= 2
s = "ab"
s *= 3
lst = [1]
lst += [2, 3]
lst *= 2
print(x, y, s, lst)
### conditional_expr
for v in [-2, 0, 3]:
    print("neg" if v < 0 else "zero" if v == 0 else "pos", end=" ")
print()
### dict_iteration_order
d = {}
for w in "the quick brown the lazy quick the".split():
    d[w] = d.get(w, 0) + 1
print(d, [k for k in d], sorted(d, key=d.get, reverse=True))
### int_float_equality
print(1 == 1.0, 2 ** 53 == 2.0 ** 53, 0.1 * 3 == 0.3, {1: "a"}[1.0], 3 == 3.0000000001)
### string_escapes
print("tab\there", "nl\\n", 'q"q', "q'q", "\x41é", len("\n"))
### bool_arith
print(True + True, True * 3, -True, 3 - False, sum([True, False, True]), True == 1, int(True))
### float_formatting_g
for v in [0.0001, 0.00001, 123456.0, 1234567.0, 1e16, 1.5e300, 2.0 ** 0.5, 100.0]:
    print(f"{v:g}", f"{v:.3g}", repr(v), end=" | ")
print()
### sort_stability
recs = [("b", 2), ("a", 2), ("c", 1), ("d", 1)]
def second(r):
    return r[1]
print(sorted(recs, key=second), sorted(recs, key=second, reverse=True))
### list_of_lists_copy
m = [[0] * 2 for _ in range(2)]
m[0][0] = 1
print(m)
### early_return
def find_first(xs, target):
    for i, x in enumerate(xs):
        if x == target:
            return i
    return -1
print(find_first([4, 5, 6], 6), find_first([], 1))
### negative_index_assign
xs = [1, 2, 3]
xs[-1] = 30
xs[0] += 10
print(xs)
### compound_keys
pairs = {}
pairs[(1, "a")] = "x"
pairs[(1, "a")] += "y"
print(pairs, (1, "a") in pairs, pairs.get((2, "b"), "none"))
### big_loop_sum
acc = 0
for i in range(10000):
    acc += i * i
print(acc)
### range_ops
r = range(0, 20, 3)
print(len(r), r[2], r[-1], 9 in r, 10 in r, list(range(3)))
### string_comparisons
words = ["banana", "Apple", "cherry", "apple"]
print(sorted(words), min(words), max(words), sorted([w.lower() for w in words]))
