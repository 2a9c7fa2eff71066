use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

use hwevo_py::hwevo_module;

/// Runs `code` with the module importable as `hwevo`.
fn run(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let module = wrap_pymodule!(hwevo_module)(py);
        py.import("sys")
            .unwrap()
            .getattr("modules")
            .unwrap()
            .set_item("hwevo", module)
            .unwrap();
        let globals = PyDict::new(py);
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.display(py);
            panic!("python snippet failed: {e}");
        }
    });
}

#[test]
fn genotype_and_codec() {
    run(r#"
import hwevo
g = hwevo.Genotype("10" * 10)
assert len(g) == 20 and g.count_ones() == 10
assert hwevo.Genotype.from_int(g.to_int()) == g
spec = hwevo.decode(g)
assert spec.num_modules == 4 and spec.filters == 16
assert hwevo.encode(spec) == g
assert g.flipped(0).hamming_distance(g) == 1
try:
    hwevo.Genotype("102")
    raise AssertionError("bad bit accepted")
except ValueError:
    pass
"#);
}

#[test]
fn ea_on_benchmarks_and_callables() {
    run(r#"
import hwevo
cfg = hwevo.EaConfig(generations=2000, adapt_rate=False, eta=0.0)
hit, best = hwevo.run_until(cfg, "onemax", seed=1)
assert hit is not None and best == 0.0
calls = []
def f(g):
    calls.append(g.bits)
    return float(20 - g.count_ones())
res = hwevo.run_ea(hwevo.EaConfig(generations=30), f, seed=3)
assert res["evaluations"] == 31 == len(calls) == len(res["history"])
assert res["best_fitness"] == min(r["eval_fitness"] for r in res["history"])
def boom(g):
    raise KeyError("nope")
try:
    hwevo.run_ea(cfg, boom, seed=0)
    raise AssertionError("exception swallowed")
except KeyError:
    pass
"#);
}

#[test]
fn summary_and_network() {
    run(r#"
import hwevo
mn, mean, std, mx = hwevo.summarize([0.25, 0.75])
assert (mn, mean, std, mx) == (0.25, 0.5, 0.25, 0.75)
assert hwevo.median([3.0, 1.0, 2.0]) == 2.0
net = hwevo.Network.from_genotype(hwevo.Genotype("00" * 10), seed=1)
out = net.predict([0.5] * 784 * 2, 2)
assert len(out) == 2 and len(out[0]) == 10
assert net.shape_trace()[-1][1] == [10]
"#);
}
