"""Acceptance gate: every shipped criterion at its stated tolerance.

Each test prints one [PASS]/[FAIL] line (visible with -s or on failure).
Every run below is seed-pinned and deterministic, so outcomes are stable.
The suite uses only the primary component; figures are rendered by the
separate frontend package from the CSVs these studies emit.
"""

import json

import numpy as np
import pytest

from pathgibbs.cluster import (
    Chain,
    ClusterDiagram,
    Contour,
    Surrogate,
    cluster_estimate_check,
    cluster_weight,
    eta_ladder_coupled,
    is_valid_cluster,
    partition_function_cluster,
    partition_function_direct,
)
from pathgibbs.experiments import (
    StudySpec,
    aligned_edges,
    run_clt_diffusion,
    run_phase_transition,
    run_polaron_energy,
    run_pphi1_validation,
    _marginal_table,
)
from pathgibbs.kernels import (
    Dispersion,
    PairKernelSpec,
    RadialProfile,
    check_kernel_conditions,
)
from pathgibbs.mcmc import (
    DiscreteSurrogateChain,
    ensemble_bridge_chain,
    sample_pphi1_exact,
)
from pathgibbs.model import BoundaryCondition, GibbsModel, TimeGrid
from pathgibbs.spectral import (
    Grid1D,
    PotentialSpec,
    ground_state,
    transition_matrix,
)

pytestmark = pytest.mark.acceptance


def crit(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] ACCEPTANCE {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def sd_anchor():
    return ground_state(Grid1D(-10.0, 10.0, 2001), PotentialSpec.harmonic(), m=64)


def test_spectral_anchors(sd_anchor):
    e0_err = abs(sd_anchor.E0 - 0.5)
    gap_err = abs(sd_anchor.gap - 1.0)
    sd_box = ground_state(Grid1D(0.0, 20.0, 2001), PotentialSpec.box(20.0), m=4)
    box_err = abs(sd_box.E0 - np.pi**2 / 800.0)
    crit("spectral_harmonic_E0", e0_err < 1e-6, f"|E0 - 1/2| = {e0_err:.2e}")
    crit("spectral_harmonic_gap", gap_err < 1e-4, f"|gap - 1| = {gap_err:.2e}")
    crit("spectral_box_E0", box_err < 1e-7, f"|E0 - pi^2/800| = {box_err:.2e}")


def test_pphi1_correctness(sd_anchor):
    # kernel detailed balance on all node pairs, transition-mass form
    b = 1.0 / 6.0
    P = transition_matrix(sd_anchor, b)
    flux = P * sd_anchor.nu[None, :]
    db = float(np.abs(flux - flux.T).max())
    crit("pphi1_detailed_balance", db < 1e-10, f"max flux asymmetry {db:.2e}")

    edges = aligned_edges(sd_anchor)
    n_samples = 1_000_000
    idx = sample_pphi1_exact(sd_anchor, TimeGrid(2.0, 8), n_samples, seed=101)
    x0 = sd_anchor.grid.nodes[idx[:, 4]]
    tab = _marginal_table(sd_anchor, edges, np.histogram(x0, bins=edges)[0], n_samples)
    crit("pphi1_exact_marginal", tab["sup_distance"] < 0.02,
         f"sup distance {tab['sup_distance']:.4f} at {n_samples} samples")

    model = GibbsModel(TimeGrid(4.0, 48), potential=PotentialSpec.harmonic(),
                       boundary=BoundaryCondition.free_stationary())
    kept, _, _ = ensemble_bridge_chain(model, 1024, 1400, 400, seed=102)
    vals = kept.ravel()[:n_samples]
    tab_m = _marginal_table(sd_anchor, edges, np.histogram(vals, bins=edges)[0],
                            len(vals))
    crit("pphi1_mcmc_marginal", tab_m["sup_distance"] < 0.02,
         f"sup distance {tab_m['sup_distance']:.4f} at {len(vals)} samples")


def test_dlr_shadow():
    spec = StudySpec("pphi1_validation", {"n_samples": 400_000, "n_grid": 1601})
    asr = run_pphi1_validation(spec, "/tmp/pathgibbs_acceptance", seed=11)
    rec = {r["name"]: r for r in asr.records}
    r = rec["dlr_middle_window"]
    crit("dlr_middle_window", r["passed"], r["detail"])


@pytest.fixture(scope="module")
def cluster_inputs():
    sd = ground_state(Grid1D(-8.0, 8.0, 801), PotentialSpec.harmonic(), m=32)
    kernel = PairKernelSpec.quadratic_longrange(1.0, 2.0)
    return sd, kernel


def test_cluster_identity_matrix(cluster_inputs):
    sd, kernel = cluster_inputs
    lam = np.array([0.01, -0.01, 0.05, -0.05, 0.1, -0.1])
    worst = 0.0
    for N in (2, 3, 4, 5, 6):
        for npos in (2, 3, 5):
            s = Surrogate.from_spectral(sd, TimeGrid(1.0, N), kernel, npos)
            zd = partition_function_direct(s, lam)
            method = "enumerate" if N <= 4 else "folded"
            zc, _ = partition_function_cluster(s, lam, method=method)
            worst = max(worst, float(np.abs(zc / zd - 1.0).max()))
    crit("cluster_full_order_identity", worst < 1e-9,
         f"worst relative deviation {worst:.2e} over the N x positions x lambda matrix")


def test_cluster_loose_end_and_decay(cluster_inputs):
    sd, kernel = cluster_inputs
    s4 = Surrogate.from_spectral(sd, TimeGrid(1.0, 4), kernel, 3)
    bad = ClusterDiagram((Contour(frozenset({(0, 1)})),), (Chain(3, 3),))
    w_bad = abs(cluster_weight(s4, bad, 0.05))
    crit("cluster_loose_end_zero", (not is_valid_cluster(bad)) and w_bad < 1e-14,
         f"|K| = {w_bad:.2e}")

    s6 = Surrogate.from_spectral(sd, TimeGrid(1.0, 6), kernel, 3)
    r = cluster_estimate_check(s6, 0.05, 4)
    sums = [r["sums"][n] for n in r["orders"] if r["sums"][n] > 0]
    ratios = [b / a for a, b in zip(sums, sums[1:])]
    geometric = len(sums) >= 2 and all(x < 1.0 for x in ratios)
    etas = eta_ladder_coupled(sd, kernel, (0.0025, 0.01, 0.04), 4)
    to_zero = all(a < b for a, b in zip(etas, etas[1:])) and etas[0] < 0.1
    crit("cluster_geometric_decay", geometric,
         f"order ratios {['%.3g' % x for x in ratios]}")
    crit("cluster_eta_to_zero", to_zero,
         f"eta {['%.3g' % e for e in etas]} along the coupled ladder")


def test_surrogate_mcmc_exactness():
    grid = TimeGrid(1.0, 2)
    kernel = PairKernelSpec.quadratic_longrange(0.3, 2.0)
    model = GibbsModel(grid, potential=PotentialSpec.harmonic(omega=2.5),
                       kernel=kernel, lam=0.2,
                       boundary=BoundaryCondition.free_stationary())
    chain = DiscreteSurrogateChain(model, np.array([-0.7, 0.0, 0.7]),
                                   p_independence=0.6)
    P = chain.transition_matrix()
    flux = chain.pi[:, None] * P
    db = float(np.abs(flux - flux.T).max())
    freqs = chain.run_occupation(10_000_000, seed=42)
    tv = chain.total_variation(freqs)
    crit("surrogate_detailed_balance", db < 1e-12, f"max dev {db:.2e}")
    crit("surrogate_total_variation", tv < 1e-3, f"TV {tv:.5f} after 1e7 steps")


def test_phase_transition_structure():
    spec = StudySpec("phase_transition", {})
    asr = run_phase_transition(spec, "/tmp/pathgibbs_acceptance", seed=31)
    rec = {r["name"]: r for r in asr.records}
    for name in ("antisymmetry", "mean_nonincreasing_in_T",
                 "transfer_operator_alpha0"):
        crit(f"phase_{name}", rec[name]["passed"], rec[name]["detail"])


def test_diffusion_constant():
    spec = StudySpec("clt_diffusion", {})
    asr = run_clt_diffusion(spec, "/tmp/pathgibbs_acceptance", seed=41)
    rec = {r["name"]: r for r in asr.records}
    for name in sorted(rec):
        if name in ("D_trend_reported",):
            continue
        crit(f"clt_{name}", rec[name]["passed"], rec[name]["detail"])


def test_polaron_energy():
    spec = StudySpec("polaron_energy", {})
    asr = run_polaron_energy(spec, "/tmp/pathgibbs_acceptance", seed=51)
    rec = {r["name"]: r for r in asr.records}
    for name in ("eg_zero_anchor", "eg_nonincreasing", "perturbative_slope"):
        crit(f"polaron_{name}", rec[name]["passed"], rec[name]["detail"])


def test_condition_checker():
    finite = check_kernel_conditions(
        PairKernelSpec.nelson(RadialProfile("shell", kmin=0.25, kmax=4.0),
                              Dispersion("massless")))
    divergent = check_kernel_conditions(
        PairKernelSpec.nelson(RadialProfile("gaussian", scale=1.0),
                              Dispersion("massless")))
    ok_f = finite["existence_mixing"]["verdict"] == "finite"
    ok_d = divergent["infrared_w3"]["verdict"] == "divergent"
    crit("conditions_compact_finite", ok_f,
         f"existence/mixing verdict: {finite['existence_mixing']['verdict']}")
    crit("conditions_infrared_divergent", ok_d,
         f"w^-3 verdict with rho(0) != 0: {divergent['infrared_w3']['verdict']}")


def test_determinism_byte_identical(tmp_path):
    from pathgibbs.cli import main

    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "study.variant = pphi1_validation\n"
        "study.n_samples = 400000\n"
        "study.n_grid = 1601\n"
    )
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = main(["sample", "--config", str(cfg), "--seed", "7",
                     "--out", str(out), "--deterministic"])
        assert code == 0
        outs.append(out / "pphi1")
    identical = all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
        for n in ("marginal.csv", "covariance.csv")
    )
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    crit("determinism_byte_identical", identical and manifest["deterministic"],
         "marginal.csv and covariance.csv byte-identical across reruns")
