import numpy as np
import pytest

from acoustomax import fem, forward, internal, reconstruct
from acoustomax.config import (
    case_I1_scenario,
    case_II4_scenario,
    validation_medium,
    validation_source,
)
from acoustomax.fem import FieldFE, QuadratureCache
from acoustomax.forward import Gammas, MediumModel, Region, SourceBump, SourceModel, ValidationError
from acoustomax.internal import InternalDataSet, add_noise, scalar_Q_direct, vectorize_Q
from acoustomax.mesh import gen_disk_mesh
from acoustomax.reconstruct import (
    CaseLabel,
    CaseViolationError,
    classify_case,
    energy_identity_residual,
    nonradiating_source,
    recover_J_galerkin,
    reconstruct_I1,
    reconstruct_II4,
)


def make_medium(gammas, background_sigma=0.5, sigma_hole=False):
    regions = []
    if sigma_hole:
        regions = [Region(1.0, 0.0, "disk", (0.3, 0.0), 0.25)]
    return MediumModel(omega=np.pi, impedance=1.0, background_eps=2.0,
                       background_sigma=background_sigma,
                       gammas=Gammas(*gammas), regions=regions)


@pytest.fixture(scope="module")
def reference4(cache4, mesh4):
    """Reference-scenario fields and internal data at refinement 4, both cases."""
    out = {}
    for name, maker in [("I1", case_I1_scenario), ("II4", case_II4_scenario)]:
        cfg = maker(refinement=4)
        E = forward.solve_impedance(cache4, cfg.medium, source=cfg.source)
        F1 = forward.auxiliary_plane_wave(cache4, cfg.medium, 1)
        F2 = forward.auxiliary_plane_wave(cache4, cfg.medium, 2)
        Q1 = scalar_Q_direct(cache4, cfg.medium, cfg.source, E, F1)
        Q2 = scalar_Q_direct(cache4, cfg.medium, cfg.source, E, F2)
        out[name] = dict(cfg=cfg, E=E, F1=F1, F2=F2, Q1=Q1, Q2=Q2,
                         J=fem.interpolate(mesh4, cfg.source.sample))
    return out


def reconstruct_from(cache, bundle, noise, seed, case):
    cfg = bundle["cfg"]
    Q1 = add_noise(bundle["Q1"], noise, seed)
    Q2 = add_noise(bundle["Q2"], noise, seed + 1)
    Qv, cond, fl = vectorize_Q(cache, Q1, Q2, bundle["F1"], bundle["F2"])
    data = InternalDataSet(Q1, Q2, Qv, cond, fl, noise_level=noise, seed=seed)
    truth = {"J": bundle["J"], "E": bundle["E"]}
    if case == "I1":
        return reconstruct_I1(cache, cfg.medium, data, truth)
    g = forward.extract_traces(cache, cfg.medium, bundle["E"]).circulations(cache)
    return reconstruct_II4(cache, cfg.medium, data, g, truth)


# ---------------------------------------------------------------------------
# classification table
# ---------------------------------------------------------------------------

def test_classification_all_six_rows(cache3):
    rows = [
        (make_medium((0.25, 0.35, 0.0)), CaseLabel.UNIQUE_I1),
        # gamma_J = 0 and kappa vanishing on the sigma hole (gamma_eps = 0)
        (make_medium((0.0, 0.35, 0.0), sigma_hole=True), CaseLabel.NONUNIQUE_I2),
        (make_medium((0.5, 0.5, 0.5)), CaseLabel.NONUNIQUE_II1),
        (make_medium((0.5, 0.2, 0.5)), CaseLabel.UNIQUE_II2),
        (make_medium((0.5, 0.2, 0.5), sigma_hole=True), CaseLabel.NONUNIQUE_II3),
        (make_medium((0.35, 0.35, 0.65)), CaseLabel.UNIQUE_II4),
    ]
    for med, expected in rows:
        info = classify_case(cache3, med)
        assert info.label is expected, (med.gammas, info.label)


def test_classify_reference_anchors(cache3):
    i1 = case_I1_scenario(refinement=3)
    info = classify_case(cache3, i1.medium)
    assert info.label is CaseLabel.UNIQUE_I1
    # eps_r >= 7.79 keeps kappa bounded away from zero
    pts = cache3.points.reshape(-1, 2)
    assert i1.medium.eps_r_at(pts).min() >= 7.79

    ii4 = case_II4_scenario(refinement=3)
    info = classify_case(cache3, ii4.medium)
    assert info.label is CaseLabel.UNIQUE_II4
    assert np.all(info.a > 0)  # a = w^2 eps (1 - 0.35/0.65) > 0

    info = classify_case(cache3, make_medium((0.5, 0.5, 0.5)))
    assert info.label is CaseLabel.NONUNIQUE_II1


# ---------------------------------------------------------------------------
# Case I.1
# ---------------------------------------------------------------------------

def test_I1_synthetic_division_loop(cache4, reference4):
    # Qvec := kappa * E0 samples inverts to E0 exactly
    b = reference4["I1"]
    cfg = b["cfg"]
    pts = cache4.points.reshape(-1, 2)
    kappa = cfg.medium.kappa_at(pts).reshape(cache4.points.shape[:2])
    E0v = fem.eval_at_quad(cache4, b["E"])
    Qv = kappa[:, :, None] * E0v
    shape = cache4.points.shape[:2]
    data = InternalDataSet(Q1=np.zeros(shape, complex), Q2=np.zeros(shape, complex),
                           Qvec=Qv, cond=np.ones(shape),
                           flagged=np.zeros(shape, bool))
    res = reconstruct_I1(cache4, cfg.medium, data, truth={"E": b["E"], "J": None})
    assert res.errors["E_rel_l2"] <= 1e-10


def test_I1_noiseless_closed_loop(cache4, reference4):
    res = reconstruct_from(cache4, reference4["I1"], 0.0, 0, "I1")
    assert res.errors["J_rel_l2"] <= 0.10
    assert res.errors["E_rel_l2"] <= 1e-9


def test_I1_case_violation(cache4, reference4):
    b = reference4["II4"]
    data_shape = cache4.points.shape[:2]
    data = InternalDataSet(Q1=np.zeros(data_shape, complex),
                           Q2=np.zeros(data_shape, complex),
                           Qvec=np.zeros(data_shape + (2,), complex),
                           cond=np.ones(data_shape),
                           flagged=np.zeros(data_shape, bool))
    with pytest.raises(CaseViolationError):
        reconstruct_I1(cache4, b["cfg"].medium, data)


# ---------------------------------------------------------------------------
# Case II.4
# ---------------------------------------------------------------------------

def test_II4_consistency_closed_loop(cache4, reference4):
    res = reconstruct_from(cache4, reference4["II4"], 0.0, 0, "II4")
    assert res.errors["E_rel_l2"] <= 0.02  # in fact machine precision
    assert res.errors["J_rel_l2"] <= 0.05


def test_II4_impedance_variant(cache4, reference4):
    b = reference4["II4"]
    cfg = b["cfg"]
    Qv, cond, fl = vectorize_Q(cache4, b["Q1"], b["Q2"], b["F1"], b["F2"])
    data = InternalDataSet(b["Q1"], b["Q2"], Qv, cond, fl)
    g = forward.extract_traces(cache4, cfg.medium, b["E"]).circulations(cache4)
    res = reconstruct_II4(cache4, cfg.medium, data, g,
                          truth={"E": b["E"], "J": b["J"]}, bc="impedance")
    assert res.errors["E_rel_l2"] <= 0.02
    assert res.diagnostics["bc"] == "impedance"


def test_II4_zero_data_zero_solution(cache4, reference4):
    cfg = reference4["II4"]["cfg"]
    shape = cache4.points.shape[:2]
    data = InternalDataSet(Q1=np.zeros(shape, complex), Q2=np.zeros(shape, complex),
                           Qvec=np.zeros(shape + (2,), complex),
                           cond=np.ones(shape), flagged=np.zeros(shape, bool))
    g = np.zeros(len(cache4.mesh.boundary_edges), dtype=complex)
    res = reconstruct_II4(cache4, cfg.medium, data, g)
    assert np.abs(res.E_rec.dofs).max() <= 1e-12
    assert np.abs(res.J_rec.dofs).max() <= 1e-12


def test_II2_reuses_dirichlet_route(cache3, mesh3):
    # gamma_eps = gamma_J with sigma bounded away from zero: the reduced
    # equation has a = 0 and the II.4 solve path applies unchanged
    med = make_medium((0.5, 0.2, 0.5))
    src = SourceModel([SourceBump((0.0, 0.1), 0.45, (1.0, -0.5))])
    info = classify_case(cache3, med)
    assert info.label is CaseLabel.UNIQUE_II2
    assert np.abs(info.a).max() == 0.0
    E = forward.solve_impedance(cache3, med, source=src)
    pts = cache3.points.reshape(-1, 2)
    kappa = med.kappa_at(pts).reshape(cache3.points.shape[:2])
    Qv = kappa[:, :, None] * fem.eval_at_quad(cache3, E) \
        + 1j * med.omega * med.gammas.J * forward._source_samples(cache3, src)
    shape = cache3.points.shape[:2]
    data = InternalDataSet(Q1=np.zeros(shape, complex),
                           Q2=np.zeros(shape, complex), Qvec=Qv,
                           cond=np.ones(shape), flagged=np.zeros(shape, bool))
    g = forward.extract_traces(cache3, med, E).circulations(cache3)
    res = reconstruct_II4(cache3, med, data, g, truth={"E": E, "J": None})
    assert res.errors["E_rel_l2"] <= 1e-9
    assert res.diagnostics["case"] == "UniqueII2"


def test_II4_pointwise_diagnostic_reported(cache4, reference4):
    res = reconstruct_from(cache4, reference4["II4"], 0.0, 0, "II4")
    assert res.diagnostics["pointwise_J_discrepancy"] < 0.2


# ---------------------------------------------------------------------------
# Galerkin J-recovery
# ---------------------------------------------------------------------------

def test_recover_J_closed_loop(cache4, reference4):
    b = reference4["I1"]
    J_rec = recover_J_galerkin(cache4, b["cfg"].medium, b["E"])
    assert fem.relative_l2_error(cache4, J_rec, b["J"]) <= 0.05


def test_recover_J_zero_and_linear(cache4, mesh4, reference4):
    med = reference4["I1"]["cfg"].medium
    zero = FieldFE(mesh4, np.zeros(len(mesh4.edges), complex))
    assert np.abs(recover_J_galerkin(cache4, med, zero).dofs).max() == 0.0
    rng = np.random.default_rng(12)
    a = FieldFE(mesh4, rng.standard_normal(len(mesh4.edges)) + 0j)
    b = FieldFE(mesh4, rng.standard_normal(len(mesh4.edges)) + 0j)
    lhs = recover_J_galerkin(cache4, med, a + b)
    rhs = recover_J_galerkin(cache4, med, a) + recover_J_galerkin(cache4, med, b)
    assert np.allclose(lhs.dofs, rhs.dofs, rtol=1e-8, atol=1e-10)


# ---------------------------------------------------------------------------
# non-radiating sources
# ---------------------------------------------------------------------------

def test_nonradiating_invisible(cache4, mesh4, mild_medium, two_bump_source):
    ghost = nonradiating_source(mesh4, mild_medium, (0.1, 0.05), 0.35)
    E1 = forward.solve_impedance(cache4, mild_medium, source=two_bump_source)
    E2 = forward.solve_impedance(
        cache4, mild_medium, source=forward.SumSource(two_bump_source, ghost))
    tr1 = forward.extract_traces(cache4, mild_medium, E1)
    tr2 = forward.extract_traces(cache4, mild_medium, E2)
    scale = np.abs(tr1.g).max()
    assert np.abs(tr2.g - tr1.g).max() / scale <= 1e-8
    assert np.abs(tr2.h - tr1.h).max() / scale <= 1e-8
    diff = E2 - E1
    grad = ghost.grad_phi
    assert (fem.l2_norm(cache4, diff - grad)
            <= 1e-8 * fem.l2_norm(cache4, grad))


def test_nonradiating_zero_bump(mesh4, cache4, mild_medium):
    ghost = nonradiating_source(mesh4, mild_medium, (0.1, 0.05), 0.35, amplitude=0.0)
    samples = ghost.sample_at_cache(cache4)
    assert np.abs(samples).max() == 0.0


def test_nonradiating_support_validation(mesh4, mild_medium):
    with pytest.raises(ValidationError):
        nonradiating_source(mesh4, mild_medium, (0.8, 0.0), 0.3)


# ---------------------------------------------------------------------------
# energy identities
# ---------------------------------------------------------------------------

def test_energy_zero_field(cache4, reference4):
    cfg = reference4["II4"]["cfg"]
    mesh = cache4.mesh
    u = FieldFE(mesh, np.zeros(len(mesh.edges), complex))
    shape = cache4.points.shape[:2]
    res = energy_identity_residual(cache4, cfg.medium, u,
                                   np.zeros(shape + (2,), complex), None)
    assert res == (0.0, 0.0)


def test_energy_requires_gamma_J(cache4, reference4):
    cfg = reference4["I1"]["cfg"]
    mesh = cache4.mesh
    u = FieldFE(mesh, np.zeros(len(mesh.edges), complex))
    shape = cache4.points.shape[:2]
    with pytest.raises(CaseViolationError):
        energy_identity_residual(cache4, cfg.medium, u,
                                 np.zeros(shape + (2,), complex), None)


def test_energy_closed_loop_difference(cache4, mesh4, reference4):
    # two II.4 closed loops with different sources; residuals of the
    # difference identities stay within 2%
    b = reference4["II4"]
    cfg = b["cfg"]
    other_source = SourceModel([SourceBump((0.05, -0.2), 0.45, (0.7, 0.3))])
    E2 = forward.solve_impedance(cache4, cfg.medium, source=other_source)
    pts = cache4.points.reshape(-1, 2)
    kappa = cfg.medium.kappa_at(pts).reshape(cache4.points.shape[:2])
    w, gJ = cfg.medium.omega, cfg.medium.gammas.J

    def data_for(E, source):
        Ev = fem.eval_at_quad(cache4, E)
        Jv = forward._source_samples(cache4, source)
        Qv = kappa[:, :, None] * Ev + 1j * w * gJ * Jv
        shape = cache4.points.shape[:2]
        return InternalDataSet(Q1=np.zeros(shape, complex),
                               Q2=np.zeros(shape, complex), Qvec=Qv,
                               cond=np.ones(shape),
                               flagged=np.zeros(shape, bool))

    g1 = forward.extract_traces(cache4, cfg.medium, b["E"])
    g2 = forward.extract_traces(cache4, cfg.medium, E2)
    r1 = reconstruct_II4(cache4, cfg.medium, data_for(b["E"], cfg.source),
                         g1.circulations(cache4))
    r2 = reconstruct_II4(cache4, cfg.medium, data_for(E2, other_source),
                         g2.circulations(cache4))
    u = r1.E_rec - r2.E_rec
    dQ = data_for(b["E"], cfg.source).Qvec - data_for(E2, other_source).Qvec
    dg = g1.g - g2.g
    res_re, res_im = energy_identity_residual(cache4, cfg.medium, u, dQ, dg)
    assert res_re <= 0.02
    assert res_im <= 0.02


def manufactured_energy_residuals(level):
    """Impedance-compatible manufactured difference field: residuals are
    genuine discretization error and shrink under refinement."""
    med = validation_medium()
    mesh = gen_disk_mesh(1.0, level)
    cache = QuadratureCache(mesh)
    info = classify_case(cache, med)
    w, lam, gJ = med.omega, med.impedance, med.gammas.J
    gamma = (1j * w * lam - 2.0) / 2.0
    a_const = w**2 * med.background_eps * (1.0 - med.gammas.eps / gJ)
    b_const = w * med.background_sigma * (1.0 - med.gammas.sigma / gJ)

    def u_ex(p):
        r2 = np.einsum("ni,ni->n", p, p)
        g = np.exp(gamma * (r2 - 1.0))
        return np.stack([-p[:, 1] * g, p[:, 0] * g], axis=1)

    def dQ_fun(p):
        r2 = np.einsum("ni,ni->n", p, p)
        g = np.exp(gamma * (r2 - 1.0))
        coef = -(8.0 * gamma + 4.0 * gamma**2 * r2) - (a_const + 1j * b_const)
        return gJ * coef[:, None] * np.stack([-p[:, 1] * g, p[:, 0] * g], axis=1)

    T, Q = cache.points.shape[:2]
    dQ = dQ_fun(cache.points.reshape(-1, 2)).reshape(T, Q, 2)
    u_interp = fem.interpolate(mesh, u_ex)
    g_circ = u_interp.dofs[mesh.boundary_edges]
    A = (fem.stiffness_matrix(cache)
         - fem.mass_matrix(cache, info.a)
         - 1j * fem.mass_matrix(cache, info.b)).astype(complex)
    rhs = fem.load_vector(cache, dQ / gJ)
    sys = fem.apply_dirichlet_tangential(A.tocsr(), rhs, mesh, g_circ)
    from acoustomax import linsolve

    x, _ = linsolve.solve(sys.matrix, sys.rhs)
    u_h = FieldFE(mesh, sys.expand(x))
    B, n = cache.bnd.weights.shape
    flat = cache.bnd.points.reshape(-1, 2)
    dg = np.einsum("bqi,bi->bq", u_ex(flat).reshape(B, n, 2),
                   cache.bnd.tangents)
    return energy_identity_residual(cache, med, u_h, dQ, dg, info)


def test_energy_residual_decreases_under_refinement():
    r3 = manufactured_energy_residuals(3)
    r4 = manufactured_energy_residuals(4)
    assert r4[0] < r3[0]
    assert r4[1] < r3[1]


# ---------------------------------------------------------------------------
# invariants: scaling, noise monotonicity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("case", ["I1", "II4"])
def test_scaling_equivariance(case):
    maker = case_I1_scenario if case == "I1" else case_II4_scenario
    noise = 0.001 if case == "I1" else 0.01
    cfg = maker(refinement=3, noise=noise)
    mesh = gen_disk_mesh(1.0, 3)
    cache = QuadratureCache(mesh)
    errs = []
    for alpha in (1.0, 2.5):
        scaled = SourceModel([
            SourceBump(b.center, b.radius,
                       tuple(alpha * np.asarray(b.amplitude)))
            for b in cfg.source.bumps
        ])
        E = forward.solve_impedance(cache, cfg.medium, source=scaled)
        F1 = forward.auxiliary_plane_wave(cache, cfg.medium, 1)
        F2 = forward.auxiliary_plane_wave(cache, cfg.medium, 2)
        Q1 = add_noise(scalar_Q_direct(cache, cfg.medium, scaled, E, F1),
                       noise, 5)
        Q2 = add_noise(scalar_Q_direct(cache, cfg.medium, scaled, E, F2),
                       noise, 6)
        Qv, cond, fl = vectorize_Q(cache, Q1, Q2, F1, F2)
        data = InternalDataSet(Q1, Q2, Qv, cond, fl)
        truth = {"J": fem.interpolate(mesh, scaled.sample), "E": E}
        if case == "I1":
            res = reconstruct_I1(cache, cfg.medium, data, truth)
        else:
            g = forward.extract_traces(cache, cfg.medium, E).circulations(cache)
            res = reconstruct_II4(cache, cfg.medium, data, g, truth)
        errs.append(res.errors["J_rel_l2"])
    assert abs(errs[0] - errs[1]) <= 1e-8


def test_noise_monotonicity_II4(cache3, mesh3):
    cfg = case_II4_scenario(refinement=3)
    E = forward.solve_impedance(cache3, cfg.medium, source=cfg.source)
    F1 = forward.auxiliary_plane_wave(cache3, cfg.medium, 1)
    F2 = forward.auxiliary_plane_wave(cache3, cfg.medium, 2)
    Q1 = scalar_Q_direct(cache3, cfg.medium, cfg.source, E, F1)
    Q2 = scalar_Q_direct(cache3, cfg.medium, cfg.source, E, F2)
    truth = {"J": fem.interpolate(mesh3, cfg.source.sample), "E": E}
    g = forward.extract_traces(cache3, cfg.medium, E).circulations(cache3)
    medians = []
    for nu in (0.0, 0.005, 0.01, 0.02):
        errs = []
        for seed in range(5):
            Qv, cond, fl = vectorize_Q(cache3, add_noise(Q1, nu, seed),
                                       add_noise(Q2, nu, seed + 100),
                                       F1, F2)
            data = InternalDataSet(Q1, Q2, Qv, cond, fl)
            res = reconstruct_II4(cache3, cfg.medium, data, g, truth)
            errs.append(res.errors["J_rel_l2"])
        medians.append(np.median(errs))
    assert all(b >= a for a, b in zip(medians, medians[1:])), medians
