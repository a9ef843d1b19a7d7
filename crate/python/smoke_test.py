"""Build the extension module, import it and check a few known answers.

Usage: python3 python/smoke_test.py [--no-build]
"""

import shutil
import subprocess
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_stage():
    if "--no-build" not in sys.argv:
        subprocess.run(
            ["cargo", "build", "--release", "-p", "ffbias-python"],
            cwd=ROOT,
            check=True,
        )
    lib = ROOT / "target" / "release" / "libpyffbias.so"
    stage = Path(tempfile.mkdtemp(prefix="pyffbias-"))
    shutil.copy(lib, stage / "pyffbias.so")
    sys.path.insert(0, str(stage))


def main():
    build_and_stage()
    import pyffbias as ff

    f3 = ff.Field("3^1")
    assert f3.size == 3 and f3.characteristic == 3
    assert ff.Field("2^1:2").elements() == ["0", "1", "y", "1+y"]

    # hyperbolic quadric: zeros q^3 + q^2 - q, other fibers q^3 - q
    q2 = ff.Poly("x0*x1 + x2*x3", f3)
    counts = ff.census(q2, 1)["counts"]
    assert counts == {"0": 33, "1": 24, "2": 24}, counts
    counts = ff.census(q2, 2)["counts"]
    assert counts["0"] == 9**3 + 9**2 - 9
    assert all(c == 9**3 - 9 for t, c in counts.items() if t != "0")

    bias = ff.bias_estimate(q2, 2)
    assert [lvl["b_n_exact"] for lvl in bias["levels"]] == ["2/1", "2/1"]
    assert Fraction(bias["bias_estimate_exact"]) == Fraction(1, 2)

    assert ff.quadratic_rank(q2)["rank"] == 2
    assert ff.quadratic_rank(ff.Poly("x0^2 + x1^2", f3))["rank"] == 1
    r = ff.rank_of(q2)
    assert (r["lo"], r["hi"]) == (2, 2), r

    cone = ff.c_regularity(ff.Poly("x0*x1", f3, 3), 3)
    assert cone["codim"] == 1 and cone["confident"], cone

    verdict = ff.c_good_check(q2, 3, 1, 3)
    assert verdict["overall"] in ("c-good", "not-c-good", "inconclusive")

    cubic = ff.Poly.random(f3, 3, 3, seed=7)
    rep = ff.fiber_identity_check(cubic, "1", 1)
    assert rep["affine"] == rep["y_points"] - rep["x_points"], rep

    try:
        ff.Poly("x0*+x1", f3)
    except ValueError as e:
        assert "position" in str(e)
    else:
        raise AssertionError("malformed polynomial accepted")

    try:
        ff.census(ff.Poly("x0*x1*x2*x3*x4", f3), 1, budget=10)
    except RuntimeError:
        pass
    else:
        raise AssertionError("budget not enforced")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
