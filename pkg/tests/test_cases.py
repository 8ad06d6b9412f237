import numpy as np
import pytest
from hypothesis import given, strategies as st

from pinn_forge.analytic import AnalyticField
from pinn_forge.cases import (BfsConfig, CavityConfig, ConjugateConfig, FieldGrid, ManufacturedNsConfig,
                              Observations, PoissonGammaConfig, RansTwinConfig, SlabConfig,
                              build_bfs_assimilation, build_conduction_slabs, build_conjugate_heat,
                              build_manufactured_ns, build_parametric_cavity, build_poisson_gamma,
                              build_rans_twin, predict_grid, read_observations, slab_solution,
                              synthetic_bfs_observations, write_observations)
from pinn_forge.cases.bfs import (HELD_OUT_SECTIONS, SPARSE_RECIRCULATION_SECTIONS, STANDARD_SECTIONS,
                                  split_counts, wall_sampling)
from pinn_forge.cases.common import format_schedule, parse_schedule, predict_points
from pinn_forge.errors import ContractError
from pinn_forge.network import Mlp, MlpSpec, forward, init_params
from pinn_forge.optim import Phase


# ---------------------------------------------------------------- cavity

def test_cavity_default_sampling_sizes():
    pb = build_parametric_cavity(CavityConfig(), seed=0)
    assert pb.samplings["interior"].points.shape == (40000, 4)
    assert len(pb.samplings["interior_spatial"]) == 2500
    assert pb.term_names == ["L_NS", "L_W", "L_T", "L_A_bottom", "L_A_top"]
    sched = pb.meta["config"].schedule
    assert [(p.kind, p.epochs) for p in sched] == [("adam", 3000), ("lbfgs", 7000)]


def test_cavity_single_parameter_grid():
    c = CavityConfig(mu_range=(0.05, 0.05), kf_range=(0.05, 0.05), n_interior=100, n_wall=10)
    pb = build_parametric_cavity(c, seed=0)
    pts = pb.samplings["interior"].points
    assert pts.shape == (100, 4) and np.all(pts[:, 2:] == 0.05)


def test_cavity_corners_are_dirichlet():
    pb = build_parametric_cavity(CavityConfig(n_interior=10, n_wall=5, n_values=1), seed=0)
    lat = pb.samplings["lateral"].points[:, :2]
    adi = np.concatenate([pb.samplings["adiabatic_bottom"].points, pb.samplings["adiabatic_top"].points])[:, :2]
    corners = [[0, 0], [0, 2], [2, 0], [2, 2]]
    for c in corners:
        assert np.any(np.all(lat == c, axis=1))
        assert not np.any(np.all(adi == c, axis=1))


def test_cavity_without_walls_has_only_residual():
    pb = build_parametric_cavity(CavityConfig(n_interior=10, n_wall=0, n_values=1), seed=0)
    assert pb.term_names == ["L_NS"]
    assert len(pb.samplings["walls"]) == 0


def test_cavity_contracts():
    with pytest.raises(ContractError):
        CavityConfig(mu_range=(0.1, 0.01))
    with pytest.raises(ContractError):
        CavityConfig(length=0.0)


# ------------------------------------------------------------- conjugate

def test_conjugate_terms_and_networks():
    pb = build_conjugate_heat(ConjugateConfig(n_fluid=50, n_solid=20), seed=0)
    assert [n.name for n in pb.networks] == ["fluid", "solid"]
    assert set(pb.term_names) == {"L_NS", "L_W", "L_u_in", "L_q", "L_T_in", "L_A_top", "L_A_bottom_left",
                                  "L_HT", "L_hot", "L_A_solid_left", "L_A_solid_right", "L_c1", "L_c2"}
    iface = pb.samplings["interface"].points
    assert np.all(iface[:, 1] == 0) and np.all((iface[:, 0] >= 1) & (iface[:, 0] <= 2))


def test_inlet_profile_mean_is_outlet_target():
    c = ConjugateConfig()
    y = np.linspace(0, c.fluid_height, 20001)
    prof = c.inlet_profile(np.stack([np.zeros_like(y), y], axis=1))
    assert np.trapezoid(prof, y) / c.fluid_height == pytest.approx(c.outlet_mean, rel=1e-8)


def test_slab_interface_temperature():
    assert SlabConfig().interface_temperature == pytest.approx(2.01 / 2.05, rel=1e-15)


def test_slab_solution_zeroes_every_term():
    c = SlabConfig()
    pb = build_conduction_slabs(c, seed=0)
    fluid, solid = slab_solution(c)
    fields = {"fluid": fluid, "solid": solid}
    for t in pb.terms:
        assert float(np.asarray(t.evaluate(fields, {}))) < 1e-24, t.name


# ------------------------------------------------------------------- bfs

def test_bfs_default_sampling_sizes():
    truth = AnalyticField({"U": "y", "V": "0", "P": "0", "nu": "0"})
    c = BfsConfig()
    pb = build_bfs_assimilation(c, synthetic_bfs_observations(c, truth), seed=0)
    assert len(pb.samplings["interior"]) == 8000
    assert len(pb.samplings["walls"]) == 2750
    assert len(pb.samplings["data"]) == 88
    assert np.all(c.in_flow(pb.samplings["interior"].points))


def test_wall_points_lie_on_walls():
    c = BfsConfig(n_wall=300)
    p = wall_sampling(c).points
    x, y = p[:, 0], p[:, 1]
    on = ((y == c.step_h) & (x <= c.step_x)) | ((x == c.step_x) & (y <= c.step_h)) \
        | ((y == 0) & (x >= c.step_x)) | (y == c.height)
    assert len(p) == 300 and np.all(on)
    assert len(np.unique(p, axis=0)) == len(p)


@given(st.integers(1, 5000), st.lists(st.floats(0.1, 30), min_size=1, max_size=6))
def test_split_counts_sum(total, lengths):
    counts = split_counts(total, lengths)
    assert sum(counts) == total and all(c >= 0 for c in counts)


def test_observation_layout_and_noise():
    c = BfsConfig()
    truth = AnalyticField({"U": "x + y"})
    clean = synthetic_bfs_observations(c, truth)
    assert len(clean) == 88
    assert np.array_equal(clean.values, clean.points.sum(axis=1))
    assert sorted(set(clean.section.tolist())) == list(STANDARD_SECTIONS)
    # upstream of the step the section only spans the open channel
    assert np.all(clean.points[clean.section == 0, 1] > c.step_h)
    noisy = synthetic_bfs_observations(c, truth, sigma=0.1, seed=3)
    again = synthetic_bfs_observations(c, truth, sigma=0.1, seed=3)
    assert np.array_equal(noisy.values, again.values) and not np.array_equal(noisy.values, clean.values)


def test_sparse_placement_skips_recirculation():
    assert not any(3 < x < 9 for x in SPARSE_RECIRCULATION_SECTIONS)
    assert len(SPARSE_RECIRCULATION_SECTIONS) == 4
    assert set(HELD_OUT_SECTIONS).isdisjoint(STANDARD_SECTIONS)


def test_observations_outside_flow_rejected():
    c = BfsConfig()
    obs = Observations(np.array([[1.0, 0.5], [10.0, 3.0]]), np.zeros(2))
    with pytest.raises(ContractError, match=r"\[0\]"):
        build_bfs_assimilation(c, obs)


def test_data_term_zero_on_generating_network(rng):
    c = BfsConfig(n_interior=50, n_wall=40)
    spec = c.spec
    theta = init_params(spec, 5)
    from pinn_forge.cases.common import input_map_for
    net = Mlp(spec, theta, ("U", "V", "P", "nu"), input_map_for(c.bounds))
    obs = synthetic_bfs_observations(c, net)
    pb = build_bfs_assimilation(c, obs, seed=0)
    full = np.concatenate([theta, np.zeros(0)])
    assert pb.evaluate(full)[2]["L_data"] == 0.0


def test_observation_file_round_trip(tmp_path):
    obs = synthetic_bfs_observations(BfsConfig(), AnalyticField({"U": "sin(x)*y"}))
    write_observations(tmp_path / "o.csv", obs)
    back = read_observations(tmp_path / "o.csv")
    assert np.array_equal(back.points, obs.points) and np.array_equal(back.values, obs.values)


def test_observation_file_errors(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("# comment\nx,y,U\n1,2,3\n4,5\n")
    with pytest.raises(ContractError):
        read_observations(p)
    p.write_text("# comment\nx,y,U\n1,2,3\n")
    assert len(read_observations(p)) == 1


# ----------------------------------------------------------- manufactured

def test_manufactured_ns_truth_zeroes_loss():
    pb = build_manufactured_ns(ManufacturedNsConfig(n_interior=200), seed=0)
    truth = pb.meta["truth"]
    for t in pb.terms:
        assert float(np.asarray(t.evaluate({"net": truth}, {}))) < 1e-20
    div = truth.jets(np.random.default_rng(0).uniform(0, 1, (50, 2)))
    assert np.allclose(div["u"].grad[0] + div["v"].grad[1], 0, atol=1e-14)


def test_twin_truth_zeroes_loss():
    pb = build_rans_twin(RansTwinConfig(bfs=BfsConfig(n_interior=300, n_wall=100)), seed=0)
    truth = pb.meta["truth"]
    _, terms = None, {t.name: float(np.asarray(t.evaluate({"net": truth}, {}))) for t in pb.terms}
    assert max(terms.values()) < 1e-20
    pts = np.random.default_rng(0).uniform([0, 1], [23, 6], (100, 2))
    j = truth.jets(pts)
    assert np.allclose(j["U"].grad[0] + j["V"].grad[1], 0, atol=1e-12)


def test_twin_sparse_variant_builds():
    pb = build_rans_twin(RansTwinConfig(bfs=BfsConfig(n_interior=100, n_wall=60),
                                        sections=SPARSE_RECIRCULATION_SECTIONS), seed=0)
    assert sorted(set(pb.meta["observations"].section.tolist())) == list(SPARSE_RECIRCULATION_SECTIONS)


def test_poisson_truth_at_true_gamma():
    c = PoissonGammaConfig()
    pb = build_poisson_gamma(c, seed=0)
    truth = pb.meta["truth"]
    vals = {t.name: float(np.asarray(t.evaluate({"net": truth}, {"gamma": c.gamma_true}))) for t in pb.terms}
    assert max(vals.values()) < 1e-20
    wrong = float(np.asarray(pb.terms[0].evaluate({"net": truth}, {"gamma": c.gamma_init})))
    assert wrong > 1.0


# ---------------------------------------------------------------- common

def test_single_point_grid_equals_forward(rng):
    spec = MlpSpec((2, 5, 3), "tanh")
    theta = rng.normal(size=spec.n_params)
    net = Mlp(spec, theta, ("u", "v", "p"))
    g = predict_grid(net, [[0, 2], [0, 1]], 1, 1, center_pressure=False)
    assert g.points.tolist() == [[1.0, 0.5]]
    assert [g.channels[c][0] for c in ("u", "v", "p")] == forward(spec, theta, [1.0, 0.5])


def test_pressure_mean_removed(rng):
    g = predict_points(AnalyticField({"p": "x + 5", "u": "x + 5"}), rng.uniform(0, 1, (30, 2)))
    assert abs(g.channels["p"].mean()) < 1e-14 and g.channels["u"].mean() > 5


def test_field_grid_round_trip(tmp_path, rng):
    g = predict_grid(AnalyticField({"u": "sin(x)", "T": "x*y"}), [[0, 1], [0, 1]], 7, 4)
    g.write_csv(tmp_path / "g.csv")
    back = FieldGrid.read_csv(tmp_path / "g.csv")
    assert np.array_equal(back.points, g.points)
    assert all(np.array_equal(back.channels[k], g.channels[k]) for k in g.channels)


@st.composite
def phase_st(draw):
    # only the settings a phase kind actually uses are written out
    kind = draw(st.sampled_from(["adam", "bfgs", "lbfgs"]))
    kw = {"gtol": draw(st.sampled_from([0.0, 1e-9, 3.3e-7])), "on_stall": draw(st.sampled_from(["abort", "stop"]))}
    if kind == "adam":
        kw["lr"] = draw(st.floats(1e-6, 1e-1))
    else:
        kw["line_search"] = draw(st.sampled_from([None, "armijo", "wolfe"]))
    if kind == "lbfgs":
        kw["memory"] = draw(st.integers(1, 30))
    return Phase(kind, draw(st.integers(0, 10**5)), **kw)



@given(st.lists(phase_st(), min_size=1, max_size=4))
def test_schedule_text_round_trip(phases):
    assert parse_schedule(format_schedule(phases)) == tuple(phases)


def test_schedule_parse_examples():
    assert parse_schedule("adam:3000:lr=1e-3,lbfgs:7000") == (Phase("adam", 3000, lr=1e-3), Phase("lbfgs", 7000))
    for bad in ("adam", "adam:x", "adam:10:speed=3", ""):
        with pytest.raises(ContractError):
            parse_schedule(bad)
