import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from ebin_geometry import completion as cp
from ebin_geometry import metric_space as ms
from ebin_geometry.errors import InvalidInput, NotCauchySequence
from ebin_geometry.fields import CellMask, GridSpec, MetricField, SemiMetricField, TangentField
from ebin_geometry.spd_core import PointKind

G8 = GridSpec.square(8)
I2 = np.eye(2)


def eg3(grid, K=200):
    return [MetricField.constant(grid, np.diag([abs(math.cos(k)), 1.0 / k])) for k in range(1, K + 1)]


def eg2(grid, r=1.0, s=2.0, T=40):
    return [
        MetricField.constant(grid, np.diag([math.exp(r * t), math.exp(-s * t)]))
        for t in range(1, T + 1)
    ]


def half_torus(grid, K=60):
    right = CellMask.half(grid)
    seq = []
    for k in range(1, K + 1):
        vals = np.where(right.bits[..., None, None], np.diag([1.0, math.exp(-k)]), I2)
        seq.append(MetricField(grid, vals))
    return seq, right


# ---------------------------------------------------------------------------
# Deflated and unbounded sets


def test_masks_eg3():
    deflated, unbounded = cp.deflated_unbounded_sets(eg3(G8), eps_det=1e-3)
    assert deflated == CellMask.full(G8)
    assert not unbounded.any()
    # the witness is the first k with |cos k| / k < 1e-3
    k = next(k for k in range(1, 201) if abs(math.cos(k)) / k < 1e-3)
    assert np.all(deflated.witness == k - 1)


def test_masks_converging_sequence():
    seq = [MetricField.constant(G8, (1 + 1 / k) * I2) for k in range(1, 50)]
    deflated, unbounded = cp.deflated_unbounded_sets(seq)
    assert not deflated.any() and not unbounded.any()
    assert np.all(deflated.witness == -1)


def test_masks_eg2():
    deflated, unbounded = cp.deflated_unbounded_sets(eg2(G8))
    assert deflated == CellMask.full(G8)
    assert unbounded == CellMask.full(G8)


def test_masks_empty_sequence():
    with pytest.raises(InvalidInput):
        cp.deflated_unbounded_sets([])


# ---------------------------------------------------------------------------
# Omega-limits


def test_omega_limit_eg3():
    seq = eg3(G8)
    rep = cp.omega_limit(seq, eps_det=1e-3)
    assert rep.deflated == CellMask.full(G8)
    assert np.all(rep.omega_limit.values == 0.0)
    assert not rep.unresolved.any()
    want = [math.sqrt(abs(math.cos(k)) / k) for k in range(1, 201)]
    np.testing.assert_allclose(rep.volume_trace, want, rtol=1e-12)
    assert rep.params["eps_det"] == 1e-3
    assert rep.cauchy_certificate["certified"]


def test_omega_limit_converging():
    seq = [MetricField.constant(G8, (1 + 1 / k) * I2) for k in range(1, 201)]
    rep = cp.omega_limit(seq, eps_conv=1e-2)
    assert not rep.deflated.any()
    assert set(rep.kinds().ravel()) == {PointKind.CONVERGES.value}
    lim = rep.omega_limit.values
    assert np.all(np.linalg.eigvalsh(lim)[..., 0] > 0)
    np.testing.assert_allclose(lim, np.broadcast_to(I2, lim.shape), atol=1e-2)


def test_omega_limit_half_torus():
    seq, right = half_torus(G8)
    rep = cp.omega_limit(seq)
    assert rep.deflated == right
    vals = rep.omega_limit.values
    assert np.all(vals[right.bits] == 0.0)
    np.testing.assert_array_equal(vals[~right.bits], np.broadcast_to(I2, (32, 2, 2)))
    # zero is the canonical representative of diag(1, 0)
    ref = SemiMetricField(G8, np.where(right.bits[..., None, None], np.diag([1.0, 0.0]), I2))
    assert cp.semimetric_equiv(rep.omega_limit, ref)
    kinds = rep.kinds()
    assert set(kinds[~right.bits].ravel()) == {PointKind.CONVERGES.value}


def test_omega_limit_not_cauchy():
    seq = [MetricField.constant(G8, np.diag([k, 1.0 / k])) for k in range(1, 200)]
    with pytest.raises(NotCauchySequence) as err:
        cp.omega_limit(seq)
    assert err.value.evidence["certified"] is False


def test_short_transient_prefix_is_refused():
    # the first dyadic windows are still pre-asymptotic at K = 30
    seq, _ = half_torus(GridSpec.square(4), K=30)
    assert not cp.sequence_certificate(seq)["certified"]
    seq, _ = half_torus(GridSpec.square(4), K=60)
    assert cp.sequence_certificate(seq)["certified"]


def test_report_json_roundtrip():
    seq, right = half_torus(GridSpec.square(4), K=60)
    rep = cp.omega_limit(seq)
    obj = json.loads(rep.to_json())
    assert obj["deflated"] == right.bits.astype(int).ravel().tolist()
    assert len(obj["omega_limit"]) == 16 * 3
    assert sum(obj["classification"]["converges"]) == 8
    assert obj["params"]["eps_det"] == 1e-8
    assert rep.to_json() == cp.omega_limit(seq).to_json()


# ---------------------------------------------------------------------------
# Equivalence


def test_semimetric_equiv_examples():
    zero = SemiMetricField.constant(G8, np.zeros((2, 2)))
    flat = SemiMetricField.constant(G8, np.diag([1.0, 0.0]))
    assert cp.semimetric_equiv(zero, flat)
    a = SemiMetricField.constant(G8, I2)
    assert cp.semimetric_equiv(a, a)
    assert not cp.semimetric_equiv(a, SemiMetricField.constant(G8, 2 * I2))
    assert not cp.semimetric_equiv(a, zero)


def test_interleaved_sequences_equivalent():
    a = [MetricField.constant(G8, (1 + 2.0**-k) * I2) for k in range(1, 61)]
    b = [MetricField.constant(G8, (1 - 2.0**-k / 3) * I2) for k in range(1, 61)]
    ra, rb = cp.omega_limit(a), cp.omega_limit(b)
    mixed = cp.interleave(a, b)
    assert len(mixed) == 120
    rm = cp.omega_limit(mixed)
    assert cp.semimetric_equiv(ra.omega_limit, rb.omega_limit)
    assert cp.semimetric_equiv(ra.omega_limit, rm.omega_limit)
    assert ra.deflated == rb.deflated == rm.deflated


def test_non_equivalent_limits_separated():
    a = [MetricField.constant(G8, (1 + 2.0**-k) * I2) for k in range(1, 61)]
    b = [MetricField.constant(G8, (2 + 2.0**-k) * I2) for k in range(1, 61)]
    ra, rb = cp.omega_limit(a), cp.omega_limit(b)
    assert not cp.semimetric_equiv(ra.omega_limit, rb.omega_limit)
    lows = [ms.theta_Y(x, y)[0] for x, y in zip(a[-10:], b[-10:])]
    assert min(lows) > 0.5
    with pytest.raises(NotCauchySequence):
        cp.omega_limit(cp.interleave(a, b))


# ---------------------------------------------------------------------------
# Volume convergence


def test_volume_report_eg3():
    seq = eg3(G8)
    rep = cp.omega_limit(seq, eps_det=1e-3)
    rows = cp.volume_convergence_report(
        seq, rep.omega_limit, {"all": CellMask.full(G8)}, deflated=rep.deflated
    )
    assert rows[0]["limit"] == 0.0
    assert rows[0]["trace"][-1] == pytest.approx(math.sqrt(abs(math.cos(200)) / 200), rel=1e-12)
    assert rows[1]["mask"] == "deflated" and rows[1]["pass"]
    assert rows[1]["decay"] >= 0.1


def test_volume_report_constant_sequence(rng):
    g = MetricField(G8, random_spd(rng, 2, G8.dims))
    rows = cp.volume_convergence_report([g, g, g], g.as_semimetric(), [CellMask.full(G8)])
    assert rows[0]["residual"] == 0.0


def test_volume_report_half_torus():
    seq, right = half_torus(G8)
    rep = cp.omega_limit(seq)
    rows = cp.volume_convergence_report(
        seq, rep.omega_limit, {"right": right, "left": ~right}, deflated=rep.deflated
    )
    by = {r["mask"]: r for r in rows}
    assert by["right"]["trace"][-1] == pytest.approx(0.5 * math.exp(-30), rel=1e-12)
    assert by["right"]["residual"] <= 1e-8
    assert by["left"]["trace"][-1] == pytest.approx(0.5, rel=1e-14)
    assert by["left"]["residual"] <= 1e-14
    assert by["deflated"]["pass"]


# ---------------------------------------------------------------------------
# Dominator


@pytest.mark.parametrize("which", ["eg3", "half", "conv"])
def test_dominator_bound_holds(which):
    grid = GridSpec.square(4)
    if which == "eg3":
        seq = eg3(grid)
    elif which == "half":
        seq = half_torus(grid)[0]
    else:
        seq = [MetricField.constant(grid, (1 + 1 / k) * I2) for k in range(1, 100)]
    assert cp.dominator_check(seq) >= -1e-12


# ---------------------------------------------------------------------------
# Conformal orbit


def test_psi_examples():
    g = MetricField.identity(G8)
    assert cp.psi(0.0, g) == g
    np.testing.assert_allclose(cp.psi(4.0, g).values, 9 * g.values)
    np.testing.assert_allclose(cp.psi_inv(9.0, g), 4.0)
    np.testing.assert_allclose(cp.psi_inv(MetricField(G8, 9 * g.values), g), 4.0)
    boundary = cp.psi(-2.0, g)
    assert isinstance(boundary, SemiMetricField)
    assert np.all(boundary.values == 0.0)
    with pytest.raises(InvalidInput):
        cp.psi(-2.5, g)
    with pytest.raises(InvalidInput):
        cp.psi_inv(-1.0, g)
    with pytest.raises(InvalidInput):
        cp.psi_inv(MetricField.constant(G8, np.diag([1.0, 2.0])), g)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_psi_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    grid = GridSpec(n, (3,) * n)
    g = MetricField(grid, random_spd(rng, n, grid.dims))
    lam = rng.uniform(-4.0 / n + 1e-3, 5.0, grid.dims)
    np.testing.assert_allclose(cp.psi_inv(cp.psi(lam, g), g), lam, rtol=1e-10, atol=1e-12)


def test_psi_matches_pure_trace_geodesic(rng):
    # t -> psi(kappa + t delta) is a reparametrised pure-trace geodesic
    g = MetricField(G8, random_spd(rng, 2, G8.dims))
    delta = -0.5
    h = TangentField(G8, delta * g.values)
    for t in (0.2, 0.7, 1.5):
        np.testing.assert_allclose(
            cp.psi(t * delta, g).values, ms.exp_field(g, h, t).values, rtol=1e-12
        )


def test_conformal_distance_examples():
    g = MetricField.identity(G8)
    assert cp.conformal_distance(1.0, 1.0, g) == 0.0
    d14 = cp.conformal_distance(1.0, 4.0, g)
    assert d14 == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert cp.conformal_path_length(1.0, 4.0, g) == pytest.approx(d14, rel=1e-10)
    d49, d19 = cp.conformal_distance(4.0, 9.0, g), cp.conformal_distance(1.0, 9.0, g)
    assert d14 + d49 == pytest.approx(d19, rel=1e-14)
    assert d19 == pytest.approx(4 * math.sqrt(2), rel=1e-14)
    assert cp.conformal_distance(0.0, 1.0, g) == pytest.approx(2 * math.sqrt(2))


@given(st.integers(0, 2**32 - 1))
def test_conformal_distance_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    g = MetricField(G8, random_spd(rng, 2, G8.dims))
    a, b, c = (rng.uniform(0, 5, G8.dims) * (rng.random(G8.dims) > 0.2) for _ in range(3))
    dab = cp.conformal_distance(a, b, g)
    assert dab == pytest.approx(cp.conformal_distance(b, a, g), rel=1e-14)
    assert dab <= cp.conformal_distance(a, c, g) + cp.conformal_distance(c, b, g) + 1e-10


def test_conformal_path_length_random(rng):
    g = MetricField(G8, random_spd(rng, 2, G8.dims))
    r0, r1 = rng.uniform(0.1, 3, G8.dims), rng.uniform(0.1, 3, G8.dims)
    d = cp.conformal_distance(r0, r1, g)
    assert cp.conformal_path_length(r0, r1, g) == pytest.approx(d, rel=1e-10)


def test_orbit_completion_member():
    assert cp.orbit_completion_member(np.full(G8.dims, 3.0), G8)
    bad = np.ones(G8.dims)
    bad[1, 1] = -1e-3
    assert not cp.orbit_completion_member(bad, G8)
    bad[1, 1] = np.inf
    assert not cp.orbit_completion_member(bad, G8)
    assert cp.orbit_completion_member(np.zeros(G8.dims), G8)
    with pytest.raises(InvalidInput):
        cp.orbit_completion_member(np.ones((3, 3)), G8)


# ---------------------------------------------------------------------------
# Mask mixtures


def test_mask_mix_examples(rng):
    g0 = MetricField(G8, random_spd(rng, 2, G8.dims))
    g1 = MetricField(G8, random_spd(rng, 2, G8.dims))
    mix, _ = cp.mask_mix(g0, g1, CellMask.full(G8))
    assert mix == g1
    mix, _ = cp.mask_mix(g0, g1, CellMask.empty(G8))
    assert mix == g0
    assert cp.mask_mix_check(g0, g1, CellMask.empty(G8))["pass"]


def test_mask_mix_tori():
    grid = GridSpec.square(16)
    g0 = MetricField.constant(grid, np.diag([10.0, 1e-5]))
    g1 = MetricField.constant(grid, np.diag([1e10, 1e-14]))
    _, bound = cp.mask_mix(g0, g1, CellMask.full(grid))
    assert bound == pytest.approx(2 * math.sqrt(2) / 5, rel=1e-12)
    out = cp.mask_mix_check(g0, g1, CellMask.full(grid), c_big=1e12)
    assert out["pass"]
    assert out["amenability"] == "quasi_amenable"
    with pytest.raises(InvalidInput):
        cp.mask_mix_check(g0, g1, CellMask.full(grid), c_big=1e6)
