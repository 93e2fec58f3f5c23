"""Quick check of the cesp extension module.

Build and install it first, e.g.
    pip install --no-build-isolation ./crates/python
then run
    python crates/python/python/smoke_test.py
"""

import math

import cesp


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    toy = cesp.Problem.toy()
    assert (toy.k, toy.d) == (1, 1), toy

    z1 = -2.0 - math.sqrt(2.0), 2.0 + math.sqrt(2.0)
    gx, gy = toy.gradient([z1[0]], [z1[1]])
    assert abs(gx[0]) < 1e-9 and abs(gy[0]) < 1e-9

    h = toy.hessian_blocks([0.0], [0.0])
    assert h == {"xx": [[4.0]], "xy": [[4.0]], "yy": [[2.0]]}, h

    assert cesp.classify_point(toy, [0.0], [0.0])["verdict"] == "stable_undesired"
    assert cesp.classify_point(toy, [z1[0]], [z1[1]])["verdict"] == "locally_optimal_saddle"

    c = cesp.extreme_curvature(toy, [0.0], [0.0])
    assert close(c["lambda_x"], 4.0, 1e-12) and close(c["lambda_y"], 2.0, 1e-12)
    assert c["v_minus"] == [0.0] and c["v_plus"][0] != 0.0

    gda = cesp.run_trajectory(toy, [-3.0], [-1.0], cesp.Config(method="gda", eta=1e-3))
    x, y = gda.final_point
    assert gda.status == "converged" and math.hypot(x[0], y[0]) < 1e-2, (gda.status, x, y)

    cfg = cesp.Config(method="cesp", eta=1e-3)
    run = cesp.run_trajectory(toy, [-3.0], [-1.0], cfg)
    x, y = run.final_point
    assert math.hypot(x[0] - z1[0], y[0] - z1[1]) < 1e-2, (x, y)
    assert run.to_csv() == cesp.run_trajectory(toy, [-3.0], [-1.0], cfg).to_csv()
    assert len(run.rows()) == len(run)

    value, vec, converged = cesp.extreme_eig([[2.0, 0.0], [0.0, -1.0]], which="min", method="power")
    assert converged and close(value, -1.0, 1e-6) and close(abs(vec[1]), 1.0, 1e-6)

    quad = cesp.Problem.quad([[2.0]], [[1.0]], [[0.5]])
    assert cesp.classify_point(quad, [0.0], [0.0])["verdict"] == "locally_optimal_saddle"

    labels = cesp.basin_raster(
        cesp.Problem.toy(1.0, 1.0),
        cesp.Config(method="cesp", max_iters=200_000),
        (-4.0, 4.0, -4.0, 4.0, 4, 4),
        cesp.toy_critical_points(),
    )
    assert len(labels) == 16 and set(labels) <= {-1, 1}, labels

    mlp = cesp.Problem.robust_mlp(seed=1)
    assert mlp.d == 40

    try:
        toy.evaluate([7.0], [0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-domain point accepted")

    print("cesp", cesp.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
