"""Smoke test for the Python bindings. Run after `pip install` or `maturin develop`."""

import json

import bscsynth_py as bs


def main():
    assert set(bs.benchmarks()) >= {"ipd", "ald"}

    ipd = bs.Benchmark("ipd")
    assert ipd.n_states == 4
    assert 0.0 < ipd.alpha_ref(0.02, 2.5) < ipd.alpha_ref(0.06, 2.5) < 1.0

    cs = ipd.synthesize(deadline=2.5)
    assert len(cs) > 0 and 0.02 in cs.periods
    c = cs[0]
    assert len(c.gain) == 1 and len(c.gain[0]) == 4
    assert c.sbf(c.center) < 0.0

    report = ipd.verify(cs)
    assert report["passed"], report

    again = bs.ControllerSet.from_json(cs.to_json())
    assert again.to_json() == cs.to_json()
    assert again[0].lyapunov_matrix == c.lyapunov_matrix

    run = ipd.simulate(cs, x0=[0.05, 0.0, -0.05, 0.0])
    assert run["summary"]["recovered_at"] == 0.0

    run = ipd.simulate(cs)
    assert run["summary"]["outcome"]["kind"] == "recovered", run["summary"]
    assert run["decay_audit"]["passed"]
    assert run["csv"].startswith("t,x_1")

    batch = ipd.batch(cs, runs=10, seed=1)
    assert batch["violations_count"] == 0
    assert batch["recovery_rate"] == 1.0

    try:
        bs.Benchmark("nope")
    except ValueError as e:
        assert "unknown benchmark" in str(e)
    else:
        raise AssertionError("unknown benchmark accepted")

    print(json.dumps({"ok": True, "periods": cs.periods, "max_recovery": batch["max_recovery_time"]}))


if __name__ == "__main__":
    main()
