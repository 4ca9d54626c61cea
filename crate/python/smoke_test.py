"""Smoke test for the msrank Python extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/msrank-*.whl
"""

import math
import random

import msrank


def main():
    rng = random.Random(2024)
    n = 80
    x = [(i + 1) / n for i in range(n)]
    y = [(2.5 if 0.4 < xi < 0.6 else 0.0) + rng.gauss(0.0, 1.0) for xi in x]
    data = msrank.Dataset(x, y)
    assert len(data) == n

    report = msrank.run_test(data, alpha=0.1, mc=199, seed=7)
    assert report.reject == (len(report.minimal_intervals) > 0)
    assert report.reject == (report.t_n > report.kappa)
    assert 0.0 < report.p_value <= 1.0
    assert report.t_n == msrank.scan_statistic(data)
    again = msrank.run_test(data, alpha=0.1, mc=199, seed=7)
    assert again.to_json() == report.to_json()
    assert msrank.Report.from_json(report.to_json()) == report
    assert report.svg(data).startswith("<svg")
    print(report)
    for iv in report.minimal_intervals:
        print("  [{x_j:.3f}, {x_k:.3f}] T={t:+.3f} {direction}".format(**iv))

    gauss = msrank.gauss_test(data, sigma=1.0, mc=199, seed=7)
    assert gauss.sigma == 1.0

    atoms = msrank.exact_null(msrank.Dataset([1, 2, 3, 4, 5], [0.3, -1.0, 2.0, 0.5, -0.1]))
    assert abs(sum(p for _, p in atoms) - 1.0) < 1e-12

    c = msrank.constants("normal:1", beta=1.0, lipschitz=1.0, n=100)
    assert abs(c["efficiency"] - 3.0 / math.pi) < 1e-9
    assert abs(c["d_star_lower"] - 1.0) < 1e-9

    assert msrank.local_midranks([3.0, 1.0, 3.0]) == [2.5, 1.0, 2.5]
    assert abs(msrank.penalty(100, 0, 10) - math.sqrt(2 * math.log(10))) < 1e-15
    assert msrank.local_statistic([0.0, 0.0], [1.0, -1.0]) == 0.0

    try:
        msrank.Dataset([0.1, 0.1], [1.0, 2.0])
    except ValueError as e:
        assert "0.1" in str(e)
    else:
        raise AssertionError("duplicate x accepted")

    print("msrank", msrank.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
