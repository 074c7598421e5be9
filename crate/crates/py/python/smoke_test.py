"""Smoke test for the riobs_py extension.

Build and install first, for example:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/riobs_py-*.whl
    python crates/py/python/smoke_test.py
"""

import os
import tempfile

import riobs_py as ro


def main():
    box = ro.Interval([-1.0, 0.0], [1.0, 2.0])
    image = ro.bound_linear_map([[1.0, -2.0]], box)
    assert image.lo == [-5.0] and image.hi == [1.0], image
    assert box.contains([0.0, 1.0]) and not box.contains([2.0, 1.0])
    try:
        ro.Interval([1.0], [0.0])
        raise AssertionError("inverted bounds accepted")
    except ValueError:
        pass

    plant = ro.Plant.benchmark()
    assert (plant.n, plant.l, plant.p, plant.m) == (6, 6, 2, 5), plant

    gain = ro.synthesize(plant)
    assert gain.case in (1, 2, 3) and gain.eta > 0.0
    assert len(gain.l) == plant.n and len(gain.l[0]) == plant.m
    assert gain.report["lmi_min_eig"] > 0.0
    assert gain.report["spectral_radius"] < 1.0

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "gain.txt")
        gain.save(path)
        loaded = ro.Gain.load(path)
        assert loaded.l == gain.l and loaded.eta == gain.eta

    sim = ro.simulate(plant, steps=500, seed=1)
    assert len(sim) == 501
    traj = ro.run_observer(plant, gain, sim)
    assert traj.containment_x == 1.0 and traj.containment_d == 1.0
    assert not traj.diverged
    for k in (0, 250, 500):
        lo, hi, x = traj.x_lo[k], traj.x_hi[k], sim.x[k]
        assert all(l - 1e-9 <= v <= h + 1e-9 for l, v, h in zip(lo, x, hi))

    open_loop = ro.run_observer(plant, ro.Gain.zero(plant), ro.simulate(plant, steps=3000, seed=1))
    assert open_loop.diverged

    results = ro.validate(plant, gain, seeds=2, steps=300)
    failed = [r for r in results if not r[1]]
    assert not failed, failed

    try:
        ro.Plant.from_file(os.path.join(os.path.dirname(__file__), "missing.toml"))
        raise AssertionError("missing config accepted")
    except OSError:
        pass

    undetectable = ro.Plant.from_toml(
        """
        [plant]
        kind = "linear"
        a = [[0.5, 0.0], [0.0, 1.5]]
        c = [[1.0, 0.0]]
        state_lo = [-10.0, -10.0]
        state_hi = [10.0, 10.0]
        w_lo = [-0.1, -0.1]
        w_hi = [0.1, 0.1]
        v_lo = [-0.1]
        v_hi = [0.1]
        x0_lo = [-1.0, -1.0]
        x0_hi = [1.0, 1.0]
        """
    )
    try:
        ro.synthesize(undetectable)
        raise AssertionError("undetectable plant certified")
    except ro.InfeasibleError:
        pass

    print(f"ok: case {gain.case}, eta {gain.eta:.4f}, peak width {max(traj.ex_width):.2f}")


if __name__ == "__main__":
    main()
