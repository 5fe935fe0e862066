import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from pathgibbs.errors import (
    AlignmentError,
    DomainError,
    SingularKernelError,
    UnboundedTailError,
)
from pathgibbs.kernels import (
    Dispersion,
    KernelTable,
    PairKernelSpec,
    RadialProfile,
    check_kernel_conditions,
)
from pathgibbs.model import (
    BoundaryCondition,
    GibbsModel,
    PathSample,
    TimeGrid,
    gibbs_log_density,
    increment_energy,
    onsite_energy,
    pair_energy_boundary,
    pair_energy_internal,
    splice,
    splice_energy_change,
)
from pathgibbs.spectral import PotentialSpec


def linear_path(grid):
    return PathSample(grid.nodes.copy())


# ---------------------------------------------------------------------------
# on-site energy


def test_onsite_zero_potential():
    g = TimeGrid(1.0, 16)
    zero = PotentialSpec.table(np.array([-100.0, 100.0]), np.zeros(2))
    e = onsite_energy(linear_path(g), zero, g)
    assert e == 0.0


def test_onsite_constant_potential():
    g = TimeGrid(2.0, 32)
    c = 2.5
    const = PotentialSpec.table(np.array([-100.0, 100.0]), np.full(2, c))
    rng = np.random.default_rng(11)
    for _ in range(3):
        path = PathSample(rng.normal(size=33))
        assert onsite_energy(path, const, g) == pytest.approx(2 * g.T * c, rel=1e-12)


def test_onsite_quadratic_path_integral():
    g = TimeGrid(1.0, 64)
    e = onsite_energy(linear_path(g), PotentialSpec.harmonic(), g)
    assert e == pytest.approx(1.0 / 3.0, abs=5 * g.b**2)


def test_onsite_quadrature_order():
    errs = []
    for N in (32, 64, 128):
        g = TimeGrid(1.0, N)
        e = onsite_energy(linear_path(g), PotentialSpec.harmonic(), g)
        errs.append(abs(e - 1.0 / 3.0))
    assert 3.0 < errs[0] / errs[1] < 5.0
    assert 3.0 < errs[1] / errs[2] < 5.0


# ---------------------------------------------------------------------------
# pair energies


def test_pair_zero_kernel():
    g = TimeGrid(1.0, 8)
    K = PairKernelSpec.table(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                             np.zeros((2, 2)))
    assert pair_energy_internal(linear_path(g), K, g) == 0.0


def test_pair_constant_kernel():
    g = TimeGrid(1.0, 16)
    K = PairKernelSpec.table(np.array([0.0, 10.0]), np.array([0.0, 10.0]),
                             np.full((2, 2), 3.0))
    # left-endpoint rectangle rule is exact for a constant kernel
    assert pair_energy_internal(linear_path(g), K, g) == pytest.approx(3.0 * (2.0) ** 2)


def test_pair_quadratic_longrange_oracle():
    g = TimeGrid(1.0, 64)
    K = PairKernelSpec.quadratic_longrange(1.0, 2.0)
    e = pair_energy_internal(linear_path(g), K, g)
    exact, _ = dblquad(lambda s, t: 0.5 * (t - s) ** 2 / (1 + abs(t - s)) ** 2,
                       -1, 1, -1, 1, epsabs=1e-12)
    assert e == pytest.approx(exact, abs=5 * g.b)


def test_pair_quadrature_first_order():
    # generic O(b) of the left-endpoint rectangle rule; needs an asymmetric
    # path (time-symmetric configurations superconverge by cancellation)
    K = PairKernelSpec.quadratic_longrange(1.0, 2.0)
    exact, _ = dblquad(
        lambda s, t: 0.5 * (np.exp(t) - np.exp(s)) ** 2 / (1 + abs(t - s)) ** 2,
        -1, 1, -1, 1, epsabs=1e-12)
    errs = []
    for N in (64, 128, 256):
        g = TimeGrid(1.0, N)
        path = PathSample(np.exp(g.nodes))
        errs.append(abs(pair_energy_internal(path, K, g) - exact))
    assert 1.5 < errs[0] / errs[1] < 3.0
    assert 1.5 < errs[1] / errs[2] < 3.0


def test_increment_energy_constant_path():
    g = TimeGrid(1.0, 8)
    K = PairKernelSpec.polaron(kappa=1.0, omega0=1.0, eps=0.5)
    path = PathSample(np.full(9, 2.0))
    e = increment_energy(path, K, g)
    lag = np.abs(np.subtract.outer(np.arange(8), np.arange(8))) * g.b
    expected = g.b**2 * (-np.exp(-lag) / 0.5).sum()
    assert e == pytest.approx(expected, rel=1e-12)


def test_increment_energy_field_kernel_quadrature_oracle():
    rho = RadialProfile("gaussian", scale=1.0)
    K = PairKernelSpec.nelson(rho, Dispersion("massive", mass=1.0))
    rng = np.random.default_rng(0)
    g = TimeGrid(1.0, 16)
    path = PathSample(np.cumsum(rng.normal(0, 0.3, 17)))
    e = increment_energy(path, K, g)

    def w_exact(r, tau):
        f = lambda k: 4 * np.pi * k**2 * np.exp(-k**2) * np.sinc(k * r / np.pi) \
            * np.exp(-np.sqrt(k**2 + 1) * abs(tau)) / (2 * np.sqrt(k**2 + 1))
        v, _ = quad(f, 0, 40, epsabs=1e-12, epsrel=1e-10, limit=300)
        return -0.5 * v

    x = path.scalar()[:16]
    lag = np.subtract.outer(g.nodes[:16], g.nodes[:16])
    direct = sum(
        w_exact(abs(x[i] - x[j]), lag[i, j]) for i in range(16) for j in range(16)
    ) * g.b**2
    assert e == pytest.approx(direct, rel=2e-3)  # table interpolation error


def test_polaron_singularity_at_zero_eps():
    g = TimeGrid(1.0, 4)
    K = PairKernelSpec.polaron(kappa=1.0, omega0=1.0, eps=0.0)
    with pytest.raises(SingularKernelError):
        increment_energy(PathSample(np.zeros(5)), K, g)


def test_kernel_symmetry_all_variants():
    variants = [
        PairKernelSpec.quadratic_longrange(0.7, 1.5),
        PairKernelSpec.bounded_decay(2.0, 3.0),
        PairKernelSpec.polaron(1.0, 1.0, 0.1),
        PairKernelSpec.nelson(RadialProfile("gaussian"), Dispersion("constant", omega0=2.0)),
    ]
    rng = np.random.default_rng(1)
    xs, ys, ts = rng.normal(size=10), rng.normal(size=10), rng.normal(size=10)
    for K in variants:
        a = K.pair_values(xs, ys, ts)
        assert np.array_equal(a, K.pair_values(ys, xs, ts))
        assert np.array_equal(a, K.pair_values(xs, ys, -ts))


# ---------------------------------------------------------------------------
# boundary energy


def _bc_const(value, K_steps, b):
    y = np.full(K_steps + 1, value)
    return BoundaryCondition.external_path(y, y, horizon=K_steps * b)


def test_boundary_zero_path_calibration():
    g = TimeGrid(1.0, 8)
    K = PairKernelSpec.bounded_decay(1.0, 3.0)
    rng = np.random.default_rng(2)
    for _ in range(5):
        path = PathSample(rng.normal(size=9))
        e, tail = pair_energy_boundary(path, _bc_const(0.0, 16, g.b), K, g)
        assert e == 0.0
        assert tail > 0


def test_boundary_w1_refused():
    g = TimeGrid(1.0, 8)
    K = PairKernelSpec.quadratic_longrange(1.0, 2.0)
    with pytest.raises(UnboundedTailError):
        pair_energy_boundary(linear_path(g), _bc_const(1.0, 16, g.b), K, g)


def test_boundary_table_kernel_oracle():
    # position-dependent summable kernel against adaptive quadrature
    g = TimeGrid(1.0, 16)
    r_axis = np.linspace(0.0, 8.0, 400)
    t_axis = np.linspace(0.0, 40.0, 800)
    vals = np.exp(-0.5 * r_axis[:, None] ** 2) / (1.0 + t_axis[None, :] ** 3)
    K = PairKernelSpec.table(r_axis, t_axis, vals, envelope=(1.0, 3.0))
    horizon = 8.0
    steps = int(horizon / g.b)
    bc = _bc_const(1.0, steps, g.b)
    path = PathSample(np.zeros(17))
    e, tail = pair_energy_boundary(path, bc, K, g)

    def w(x, y, u):
        return np.exp(-0.5 * (x - y) ** 2) / (1 + abs(u) ** 3)

    def inner(t):
        v, _ = quad(lambda s: w(1.0, 0.0, t - s) - w(0.0, 0.0, t - s), -1, 1,
                    epsabs=1e-12)
        return v

    left, _ = quad(inner, -1 - horizon, -1, epsabs=1e-10, limit=200)
    right, _ = quad(inner, 1, 1 + horizon, epsabs=1e-10, limit=200)
    exact = 2 * (left + right)
    assert e == pytest.approx(exact, abs=6 * g.b)
    assert abs(exact - e) < tail + 6 * g.b  # truncation bounded as reported


# ---------------------------------------------------------------------------
# log-density and splice


def test_log_density_pure_gaussian():
    g = TimeGrid(1.0, 8)
    model = GibbsModel(g)  # no potential, no kernel
    rng = np.random.default_rng(3)
    path = PathSample(rng.normal(size=9))
    inc = np.diff(path.positions, axis=0)
    assert gibbs_log_density(path, model) == pytest.approx(
        -float((inc**2).sum()) / (2 * g.b), rel=1e-15)


def test_log_density_constant_shift():
    # adding a constant c to V shifts every path's log-density by -2Tc
    g = TimeGrid(1.0, 16)
    rng = np.random.default_rng(4)
    shift = 1.7
    axis = np.array([-100.0, 100.0])
    base = PotentialSpec.table(axis, np.zeros(2))
    shifted = PotentialSpec.table(axis, np.full(2, shift))
    m0 = GibbsModel(g, potential=base)
    m1 = GibbsModel(g, potential=shifted)
    for _ in range(3):
        path = PathSample(rng.normal(size=17))
        d = gibbs_log_density(path, m1) - gibbs_log_density(path, m0)
        assert d == pytest.approx(-2 * g.T * shift, rel=1e-12)


def test_log_density_decomposition():
    g = TimeGrid(1.0, 32)
    K = PairKernelSpec.quadratic_longrange(0.5, 2.0)
    V = PotentialSpec.harmonic()
    model = GibbsModel(g, potential=V, kernel=K, lam=0.3,
                       boundary=BoundaryCondition.pinned(0.0, 0.0))
    rng = np.random.default_rng(5)
    path = PathSample(rng.normal(size=33))
    inc = np.diff(path.positions, axis=0)
    manual = (-float((inc**2).sum()) / (2 * g.b)
              - onsite_energy(path, V, g)
              - 0.3 * pair_energy_internal(path, K, g))
    assert gibbs_log_density(path, model) == pytest.approx(manual, abs=1e-12)


def test_log_density_nelson_sign():
    g = TimeGrid(1.0, 8)
    K = PairKernelSpec.polaron(1.0, 1.0, 0.3)
    rng = np.random.default_rng(6)
    path = PathSample(rng.normal(size=(9, 3)))
    m_inc = GibbsModel(g, dim=3, kernel=K, lam=0.2,
                       boundary=BoundaryCondition.pinned_origin(np.zeros(3)),
                       energy_form="increment")
    path.positions[g.origin_index] = 0.0
    e = increment_energy(path, K, g)
    inc = np.diff(path.positions, axis=0)
    gauss = -float((inc**2).sum()) / (2 * g.b)
    assert gibbs_log_density(path, m_inc) == pytest.approx(gauss - 0.2 * e, abs=1e-12)


def test_splice_identity_and_bookkeeping():
    g = TimeGrid(1.0, 8)
    path = PathSample(np.arange(9.0))
    same, g_same = splice(path, 0.0, g)
    assert np.array_equal(same.positions, path.positions)
    cut, g_cut = splice(path, g.b, g)
    assert len(cut) == 7  # two origin-adjacent halves joined
    assert g_cut.N == 6 and g_cut.T == pytest.approx(0.75)
    assert np.array_equal(cut.scalar(), [0, 1, 2, 5, 6, 7, 8])


def test_splice_composition():
    g = TimeGrid(1.0, 16)
    rng = np.random.default_rng(7)
    path = PathSample(rng.normal(size=17))
    a, ga = splice(path, g.b, g)
    b, gb = splice(a, ga.b, ga)
    c, gc = splice(path, 2 * g.b, g)
    assert np.array_equal(b.positions, c.positions)
    assert gb == gc


def test_splice_alignment_error():
    g = TimeGrid(1.0, 8)
    with pytest.raises(AlignmentError):
        splice(PathSample(np.zeros(9)), 0.4 * g.b, g)
    with pytest.raises(DomainError):
        splice(PathSample(np.zeros(9)), 1.0, g)


def test_splice_energy_bounded_for_summable_kernel():
    # bounded kernel with summable decay: statistic bounded uniformly (C = 0)
    g = TimeGrid(2.0, 16)
    K = PairKernelSpec.bounded_decay(1.0, 3.0)
    model = GibbsModel(g, kernel=K, lam=1.0,
                       boundary=BoundaryCondition.pinned(0.0, 0.0))
    rng = np.random.default_rng(8)
    vals = [abs(splice_energy_change(PathSample(rng.normal(size=17)), tau, model))
            for tau in (g.b, 2 * g.b, 4 * g.b) for _ in range(50)]
    # |W| <= sum over all pairs of b^2 R / (1 + lag^3), a fixed constant
    lag = np.abs(np.subtract.outer(np.arange(16), np.arange(16))) * g.b
    bound = 2 * g.b**2 * (1.0 / (1.0 + lag**3)).sum()
    assert max(vals) <= bound


# ---------------------------------------------------------------------------
# condition checks


def test_conditions_shell_profile_finite():
    spec = PairKernelSpec.nelson(RadialProfile("shell", kmin=0.25, kmax=4.0),
                                 Dispersion("massless"))
    rep = check_kernel_conditions(spec)
    assert rep["existence_mixing"]["verdict"] == "finite"
    assert rep["diffusion_positive"]["verdict"] == "finite"
    assert rep["infinite_volume"]["verdict"] == "finite"


def test_conditions_infrared_divergence():
    spec = PairKernelSpec.nelson(RadialProfile("gaussian", scale=1.0),
                                 Dispersion("massless"))
    rep = check_kernel_conditions(spec)
    assert rep["infrared_w3"]["verdict"] == "divergent"


def test_conditions_zero_profile():
    spec = PairKernelSpec.nelson(RadialProfile("shell", kmin=2.0, kmax=1.0),
                                 Dispersion("massless"))  # empty support
    rep = check_kernel_conditions(spec)
    assert all(v["value"] == 0.0 for v in rep.values())
    assert all(v["verdict"] == "finite" for v in rep.values())


def test_conditions_refused_for_other_kernels():
    with pytest.raises(DomainError):
        check_kernel_conditions(PairKernelSpec.bounded_decay(1.0, 3.0))


# ---------------------------------------------------------------------------
# kernel table cache


def test_kernel_table_roundtrip(tmp_path):
    spec = PairKernelSpec.nelson(RadialProfile("shell", kmin=0.25, kmax=4.0),
                                 Dispersion("massless"))
    table = spec._nelson_table(n_r=33, n_t=17, r_max=5.0, t_max=10.0)
    f = tmp_path / "kernel.bin"
    table.save(f)
    loaded = KernelTable.load(f)
    assert loaded.spec_hash == table.spec_hash
    assert np.array_equal(loaded.values, table.values)
    assert loaded.digest() == table.digest()
    rng = np.random.default_rng(9)
    r, t = np.abs(rng.normal(size=5)), rng.normal(size=5)
    assert np.allclose(loaded.lookup(r, t), table.lookup(r, t))


def test_model_invariant_validation():
    g = TimeGrid(1.0, 8)
    K = PairKernelSpec.bounded_decay(1.0, 3.0)  # not increment-only
    with pytest.raises(DomainError):
        GibbsModel(g, kernel=K, lam=0.1, energy_form="increment",
                   boundary=BoundaryCondition.pinned_origin())
    K2 = PairKernelSpec.polaron(1.0, 1.0, 0.1)
    with pytest.raises(DomainError):
        GibbsModel(g, kernel=K2, lam=0.1, energy_form="increment",
                   boundary=BoundaryCondition.pinned(0.0, 0.0))
