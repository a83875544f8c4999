"""Smoke test for the allee extension module."""

import math

import allee

ml = allee.Model("mate-limitation", {"lambda": "lognormal:0.1,0.5", "h": "const:10"})
print(ml)
assert ml.param_names == ["lambda", "h"]
assert ml.monotonicity() == "increasing in x"
assert math.isclose(ml.fitness(10.0, [2.0, 10.0]), 1.0)

tr = allee.simulate(ml, 200.0, t_max=500, seed=3)
assert tr["densities"][0] == 200.0
print("trajectory fate:", tr["fate"])

ens = allee.ensemble(ml, 95.0, 400, seed=1, rule="above:100")
assert 0.2 < ens["p_persist"] < 0.6, ens["p_persist"]
print("p_persist at x0=95:", ens["p_persist"], "+/-", ens["se"])

report = allee.classify(ml)
assert report["regime"] == "conditional_persistence", report
print(report["record"])

ricker = allee.Model("ricker", {"r": "normal:0,1", "a": "const:1"})
assert allee.classify(ricker)["regime"] == "indeterminate"

ps = allee.Model(
    "predator-saturation-ndd",
    {"r": "const:4", "a": "const:4", "h": "const:0.08333333333333333", "P": "const:0.8"},
)
sk = allee.skeleton(ps)
assert sk["label"] == "positive_attractor", sk
assert not allee.chain_reachable(ps, 0.001, sk["fixed_points"][-1])

g = allee.jensen_gap(1.0, "uniform:1,3")
assert abs(g["mean_ratio"] - math.log(3) / 2) < 4 * g["standard_error"]
assert g["gap"] > 0

assert allee.parse_distribution("uniform:1,3") == "uniform:1,3"
try:
    allee.Model("ricker", {"r": "nonsense:1", "a": "const:1"})
except ValueError as e:
    print("rejected:", e)
else:
    raise AssertionError("bad literal accepted")

print("ok")
