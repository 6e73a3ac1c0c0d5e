"""Smoke test for the pymsp extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pymsp-*.whl
"""

import math
import os
import tempfile

import pymsp


def main():
    scenario = pymsp.Scenario("[network]\nnum_users = 3\n", seed=5, samples=32)
    assert scenario.num_users == 3 and scenario.samples == 32
    samples = scenario.simulate()
    assert len(samples) == 32 and samples.users == 3
    assert samples == scenario.simulate()

    w = samples.beamformer(0, 1)
    assert abs(sum(abs(z) ** 2 for z in w) - 1.0) < 1e-12

    p_max = scenario.p_max
    sol = pymsp.solve(samples, p_max)
    assert sol.converged, sol
    assert abs(max(sol.power) / p_max - 1.0) < 1e-12
    spread = max(sol.oer_rates) - min(sol.oer_rates)
    assert spread <= 1e-6 * min(sol.oer_rates), sol.oer_rates

    p = [p_max] * samples.users
    oer = samples.oer_rates(p)
    uatf = samples.uatf_rates(p)
    assert all(u <= o for u, o in zip(uatf, oer))

    cmp = pymsp.compare(samples, p_max)
    if cmp.uatf is not None:
        assert cmp.oer_objective >= cmp.uatf_solution_oer_objective * (1 - 1e-6)

    assert pymsp.thompson_metric([1.0, 2.0], [2.0, 2.0]) == math.log(2.0)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.pcss")
        samples.save(path)
        assert pymsp.SampleSet.load(path) == samples
        out = scenario.run(os.path.join(d, "out"))
        assert os.path.exists(os.path.join(d, "out", "rates.csv"))
        assert out.oer.converged

    try:
        pymsp.Scenario("[network]\ntau_p = 0\n")
    except ValueError as e:
        assert "line 2" in str(e)
    else:
        raise AssertionError("invalid scenario accepted")

    try:
        pymsp.SampleSet(1, 1, 1.0, [1 + 0j], [2 + 0j])
    except pymsp.MspPowerError:
        pass
    else:
        raise AssertionError("non-unit beamformer accepted")

    print(f"ok: min OER {min(sol.oer_rates):.4f} nats after {sol.iterations} iterations")


if __name__ == "__main__":
    main()
