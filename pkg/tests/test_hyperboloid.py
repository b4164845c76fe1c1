import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from oracles import naive_kernel

from lorentzseq.errors import DimensionMismatch, DomainError, InvalidVector
from lorentzseq.hyperboloid import (
    HyperboloidPoint,
    KernelKind,
    KernelMatrix,
    PSDMode,
    acosh_stable,
    distance,
    format_kernel_csv,
    kernel_matrix,
    lift,
    lorentz_inner,
    psd_adjust,
    read_kernel_binary,
    write_kernel_binary,
)

SQRT170 = 13.038404810405297  # mpmath, 40 digits
D_3_0__0_4 = 3.2595725562629216  # ln(sqrt(170) + 13), mpmath


def mp_acosh_closed_form(z: float):
    with mpmath.workdps(50):
        zz = mpmath.mpf(z)
        return mpmath.log(zz + mpmath.sqrt(zz * zz - 1))


def mp_distance(a, b):
    with mpmath.workdps(60):
        a = [mpmath.mpf(float(x)) for x in a]
        b = [mpmath.mpf(float(x)) for x in b]
        x0 = mpmath.sqrt(1 + sum(x * x for x in a))
        y0 = mpmath.sqrt(1 + sum(y * y for y in b))
        B = x0 * y0 - sum(x * y for x, y in zip(a, b))
        return mpmath.acosh(max(B, mpmath.mpf(1))), x0 * y0


class TestLift:
    def test_origin(self):
        X = lift(np.zeros(5))
        assert X.x0 == 1.0 and not X.spatial.any()

    def test_three_zero(self):
        X = lift([3.0, 0.0])
        assert X.x0 == pytest.approx(math.sqrt(10), rel=1e-15)
        assert abs(X.x0 ** 2 - 9 - 1) < 1e-12

    def test_unit_norm(self):
        assert lift([0.6, 0.8]).x0 == pytest.approx(math.sqrt(2), rel=1e-15)

    @pytest.mark.parametrize("bad", [[np.nan, 1.0], [np.inf], [[1.0, 2.0]]])
    def test_invalid(self, bad):
        with pytest.raises(InvalidVector):
            lift(bad)


class TestInner:
    def test_identical(self):
        X = lift([3.0, 0.0])
        assert lorentz_inner(X, X) == 1.0

    def test_worked_pair(self):
        assert lorentz_inner(lift([3.0, 0.0]), lift([0.0, 4.0])) == pytest.approx(SQRT170, rel=1e-14)

    def test_origin(self):
        assert lorentz_inner(lift([0.0]), lift([0.0])) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            lorentz_inner(lift([1.0]), lift([1.0, 2.0]))

    def test_off_sheet_points_raise(self):
        X = HyperboloidPoint(1.0, np.array([5.0]))
        Y = HyperboloidPoint(3.0, np.array([5.0]))
        with pytest.raises(DomainError):
            lorentz_inner(X, Y)

    def test_clamps_rounding_below_one(self):
        X = lift([3.0, 0.0])
        Y = HyperboloidPoint(X.x0 + 1e-10, X.spatial)
        assert lorentz_inner(X, Y) == 1.0


class TestAcosh:
    def test_one(self):
        assert acosh_stable(1.0) == 0.0

    def test_cosh_round_trip(self):
        assert acosh_stable((math.e ** 2 + math.e ** -2) / 2) == pytest.approx(2.0, rel=1e-15)

    def test_near_one(self):
        z = 1 + 1e-12
        got = acosh_stable(z)
        assert got == pytest.approx(float(mp_acosh_closed_form(z)), rel=1e-12)
        assert got == pytest.approx(math.sqrt(2 * (z - 1)), rel=1e-6)
        assert got == pytest.approx(1.41421e-6, rel=1e-4)

    def test_below_one(self):
        with pytest.raises(DomainError):
            acosh_stable(1 - 1e-15)

    @pytest.mark.parametrize("z", np.concatenate([1 + np.logspace(-14, -1, 30),
                                                  np.logspace(0.1, 15, 40)]))
    def test_matches_extended_precision(self, z):
        ref = mp_acosh_closed_form(float(z))
        assert abs(acosh_stable(float(z)) - ref) <= 1e-12 * ref

    def test_monotone(self):
        grid = np.sort(np.concatenate([1 + np.logspace(-15, 0, 2000), np.logspace(0, 12, 2000)]))
        vals = [acosh_stable(float(z)) for z in grid]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestDistance:
    def test_self(self):
        X = lift([0.3, -2.0, 7.0])
        assert distance(X, X) == 0.0

    def test_worked_pair(self):
        d = distance(lift([3.0, 0.0]), lift([0.0, 4.0]))
        assert d == pytest.approx(D_3_0__0_4, rel=1e-14)
        assert d == pytest.approx(math.log(math.sqrt(170) + 13), rel=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(hnp.arrays(np.float64, 6, elements=st.floats(-50, 50)),
           hnp.arrays(np.float64, 6, elements=st.floats(-50, 50)))
    def test_symmetric_and_accurate(self, a, b):
        X, Y = lift(a), lift(b)
        d = distance(X, Y)
        assert d == distance(Y, X)
        ref, scale = mp_distance(a, b)
        # lifting rounds x0; that perturbs the gap by ~eps*x0*y0 before acosh
        slack = 8 * np.finfo(float).eps * float(scale) / max(float(mpmath.sinh(ref)), 1e-300)
        assert abs(d - ref) <= 1e-12 * float(ref) + min(slack, 1e-6)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        X, Y, Z = (lift(rng.standard_normal(8) * 10 ** rng.uniform(-4, 3)) for _ in range(3))
        assert distance(X, Z) <= distance(X, Y) + distance(Y, Z) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sheet_and_lower_bound_large_norms(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 64))
    u, v = rng.standard_normal(d), rng.standard_normal(d)
    u *= 10 ** rng.uniform(-3, 6) / np.linalg.norm(u)
    v *= 10 ** rng.uniform(-3, 6) / np.linalg.norm(v)
    X, Y = lift(u), lift(v)
    assert X.sheet_residual() <= 1e-9
    assert lorentz_inner(X, Y) >= 1.0
    assert abs(lorentz_inner(X, X) - 1.0) <= 1e-9


class TestKernelMatrix:
    def test_single_row(self):
        assert kernel_matrix([[1.0, 2.0]]).data.tolist() == [[0.0]]

    def test_worked_pair(self):
        K = kernel_matrix([[3.0, 0.0], [0.0, 4.0]]).data
        assert K[0, 0] == K[1, 1] == 0.0
        assert K[0, 1] == K[1, 0] == pytest.approx(D_3_0__0_4, rel=1e-14)

    def test_euclidean_345(self):
        K = kernel_matrix([[0.0, 0.0], [3.0, 4.0]], KernelKind.EUCLIDEAN).data
        assert K.tolist() == [[0.0, 5.0], [5.0, 0.0]]

    @pytest.mark.parametrize("kind", ["hyperboloid", "euclidean"])
    def test_matches_naive_loop_exactly(self, kind):
        rng = np.random.default_rng(11)
        S = rng.random((60, 16)) * rng.uniform(0.01, 20, size=(60, 1))
        K = kernel_matrix(S, kind).data
        assert np.array_equal(K, naive_kernel(S, kind))

    def test_matches_scalar_distance(self):
        rng = np.random.default_rng(12)
        S = rng.random((20, 9))
        K = kernel_matrix(S).data
        for i in range(20):
            for j in range(20):
                assert K[i, j] == distance(lift(S[i]), lift(S[j]))

    def test_workers_identical(self):
        rng = np.random.default_rng(13)
        S = rng.random((97, 32))
        base = kernel_matrix(S, workers=1).data
        for w in (2, 3, 8):
            assert kernel_matrix(S, workers=w).data.tobytes() == base.tobytes()

    def test_lift_scale(self):
        S = np.array([[0.1, 0.2], [0.3, 0.0]])
        assert np.array_equal(kernel_matrix(S, lift_scale=10.0).data, kernel_matrix(S * 10.0).data)

    def test_nonfinite(self):
        with pytest.raises(InvalidVector):
            kernel_matrix([[0.0, np.nan], [1.0, 1.0]])

    def test_empty(self):
        assert kernel_matrix(np.zeros((0, 4))).data.shape == (0, 0)


class TestPSDAdjust:
    def test_shift_two_by_two(self):
        K = KernelMatrix(np.array([[0.0, 2.0], [2.0, 0.0]]), KernelKind.HYPERBOLOID)
        eps = 1e-9
        out = psd_adjust(K, PSDMode.SHIFT, epsilon=eps)
        assert out.diag_shift == pytest.approx(2 + eps, rel=1e-15)
        assert out.data[0, 1] == out.data[1, 0] == 2.0
        assert out.data[0, 0] == pytest.approx(2 + eps, rel=1e-15)
        lam = np.linalg.eigvalsh(out.data)
        assert lam[1] == pytest.approx(4 + eps, rel=1e-12)
        assert lam[0] == pytest.approx(eps, abs=1e-13)

    def test_shift_already_psd(self):
        K = KernelMatrix(np.eye(2), KernelKind.HYPERBOLOID)
        out = psd_adjust(K, PSDMode.SHIFT)
        assert out.diag_shift == 0.0 and np.array_equal(out.data, np.eye(2))

    def test_clip_defers(self):
        data = np.array([[0.0, 2.0], [2.0, 0.0]])
        out = psd_adjust(KernelMatrix(data, KernelKind.HYPERBOLOID), PSDMode.CLIP)
        assert out.adjustment is PSDMode.CLIP and np.array_equal(out.data, data)

    @pytest.mark.parametrize("seed", range(10))
    def test_shift_distance_matrices(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 100))
        K = kernel_matrix(rng.random((n, 12)))
        out = psd_adjust(K, PSDMode.SHIFT)
        off = ~np.eye(n, dtype=bool)
        assert np.array_equal(out.data[off], K.data[off])
        assert np.linalg.eigvalsh(out.data)[0] >= 0


class TestFormats:
    def test_binary_layout(self):
        K = KernelMatrix(np.array([[0.0, 1.5], [1.5, 0.0]]), KernelKind.EUCLIDEAN,
                         PSDMode.SHIFT, 0.25)
        buf = io.BytesIO()
        write_kernel_binary(K, buf)
        raw = buf.getvalue()
        assert raw[:4] == b"HKM1"
        assert int.from_bytes(raw[4:12], "little") == 2
        assert raw[12] == K.kind_code == 1 | (2 << 4)
        assert np.frombuffer(raw[13:21], "<f8")[0] == 0.25
        assert np.frombuffer(raw[21:], "<f8").tolist() == [0.0, 1.5, 1.5, 0.0]
        back = read_kernel_binary(raw)
        assert back.kind is KernelKind.EUCLIDEAN and back.adjustment is PSDMode.SHIFT
        assert np.array_equal(back.data, K.data) and back.diag_shift == 0.25

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            read_kernel_binary(b"XXXX" + bytes(17))

    def test_csv_round_trips_exactly(self):
        rng = np.random.default_rng(3)
        K = kernel_matrix(rng.random((5, 4)))
        parsed = np.loadtxt(io.StringIO(format_kernel_csv(K)), delimiter=",")
        assert np.array_equal(parsed, K.data)
