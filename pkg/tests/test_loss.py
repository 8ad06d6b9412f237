import numpy as np
import pytest
from hypothesis import given, strategies as st

from pinn_forge.analytic import AnalyticField
from pinn_forge.autodiff import Var, finite_difference_gradient
from pinn_forge.cases import SlabConfig, build_parametric_cavity, slab_solution
from pinn_forge.cases.cavity import CavityConfig
from pinn_forge.errors import ContractError
from pinn_forge.loss import (DataTerm, DirichletTerm, InterfaceFluxTerm, InterfaceValueTerm, MeanValueTerm,
                             NetworkSlot, NeumannTerm, PdeTerm, TrainingProblem, interface_terms,
                             mean_value_term, mse_data, mse_dirichlet, mse_neumann, mse_pde)
from pinn_forge.network import InputMap, Mlp, MlpSpec
from pinn_forge.physics import SolidCoefficients, residual_heat
from pinn_forge.sampling import SamplingSet, Segment, boundary_sample, latin_hypercube

SQUARE = [[0, 1], [0, 1]]


def _zero_net(n_out=4, channels=("u", "v", "T", "p")):
    spec = MlpSpec((2, 5, n_out), "tanh")
    return Mlp(spec, np.zeros(spec.n_params), channels)


def _points(n=30, seed=0):
    return latin_hypercube(n, SQUARE, seed)


def test_heat_residual_of_harmonic_field_is_zero():
    t = PdeTerm("L", "s", _points(), residual_heat, SolidCoefficients(1.0))
    assert mse_pde(t, {"s": AnalyticField({"T": "x**2 - y**2 + 3*x"})}) < 1e-24


def test_single_residual_value_squared():
    s = SamplingSet(np.array([[0.3, 0.3]]), "interior", np.array(SQUARE))
    op = lambda f, p, c: (np.array([0.5]),)
    assert mse_pde(PdeTerm("L", "n", s, op), {"n": _zero_net()}) == 0.25


def test_dirichlet_examples():
    f = AnalyticField({"T": "x + y"})
    s = _points()
    assert mse_dirichlet(DirichletTerm("L", "n", s, "T", lambda p: p[:, 0] + p[:, 1]), {"n": f}) == 0.0
    left = boundary_sample(Segment("left", (0, 0), (0, 2), (-1, 0)), 17)
    assert mse_dirichlet(DirichletTerm("L_T", "n", left, "T", 1.0), {"n": _zero_net()}) == 1.0
    assert mse_dirichlet(DirichletTerm("L_W", "n", left, ("u", "v"), 0.0), {"n": _zero_net()}) == 0.0


def test_neumann_examples():
    top = boundary_sample(Segment("top", (0, 1), (1, 1), (0, 1)), 11)
    assert mse_neumann(NeumannTerm("L", "n", top, "T"), {"n": AnalyticField({"T": "2.5"})}) == 0.0
    assert mse_neumann(NeumannTerm("L", "n", top, "T"), {"n": AnalyticField({"T": "y"})}) == 1.0
    assert mse_neumann(NeumannTerm("L", "n", top, "T"), {"n": AnalyticField({"T": "x"})}) == 0.0
    with pytest.raises(ContractError):
        NeumannTerm("L", "n", _points(), "T")


def test_data_term_examples(rng):
    spec = MlpSpec((2, 6, 1), "tanh")
    net = Mlp(spec, rng.normal(size=spec.n_params), ("U",))
    s = _points(88)
    vals = net.values(s.points)["U"]
    assert mse_data(DataTerm("L", "n", s, "U", vals), {"n": net}) == 0.0
    zero = Mlp(spec, np.zeros(spec.n_params), ("U",))
    assert mse_data(DataTerm("L", "n", s, "U", np.ones(88)), {"n": zero}) == 1.0


@given(st.integers(0, 10**6))
def test_data_term_order_invariant(seed):
    rng = np.random.default_rng(seed)
    spec = MlpSpec((2, 4, 1), "tanh")
    net = Mlp(spec, rng.normal(size=spec.n_params), ("U",))
    pts = rng.uniform(0, 1, (25, 2))
    obs = rng.normal(size=25)
    perm = rng.permutation(25)
    a = mse_data(DataTerm("L", "n", SamplingSet(pts, "data", np.array(SQUARE)), "U", obs), {"n": net})
    b = mse_data(DataTerm("L", "n", SamplingSet(pts[perm], "data", np.array(SQUARE)), "U", obs[perm]), {"n": net})
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def _interface():
    return boundary_sample(Segment("interface", (1, 0), (2, 0), (0, -1)), 40)


def test_interface_terms_examples():
    s = _interface()
    pair = (InterfaceValueTerm("c1", "f", "s", s), InterfaceFluxTerm("c2", "f", "s", s, 0.5, 0.5))
    same = AnalyticField({"T": "sin(x)*exp(y)"})
    assert interface_terms(pair, same, same) == (0.0, 0.0)
    assert interface_terms(pair, AnalyticField({"T": "1"}), AnalyticField({"T": "0"})) == (1.0, 0.0)


def test_interface_terms_at_slab_solution():
    c = SlabConfig()
    fluid, solid = slab_solution(c)
    s = _interface()
    pair = (InterfaceValueTerm("c1", "f", "s", s), InterfaceFluxTerm("c2", "f", "s", s, c.kf, c.ks))
    v, q = interface_terms(pair, fluid, solid)
    assert v < 1e-12 and q < 1e-12


def test_mean_value_examples():
    s = boundary_sample(Segment("outlet", (2, 0), (2, 0.5), (1, 0)), 30)
    assert mean_value_term(MeanValueTerm("q", "n", s, "u", 2 / 3), {"n": AnalyticField({"u": "2/3"})}) < 1e-30
    assert mean_value_term(MeanValueTerm("q", "n", s, "u", 2 / 3), {"n": _zero_net()}) == pytest.approx(4 / 9)


def _problem(terms):
    slot = NetworkSlot("n", MlpSpec((2, 3, 4), "tanh"), ("u", "v", "T", "p"), InputMap.identity(2))
    return TrainingProblem([slot], terms)


def test_total_is_weighted_sum():
    s = SamplingSet(np.array([[0.5, 0.5]]), "interior", np.array(SQUARE))
    a = PdeTerm("a", "n", s, lambda f, p, c: (np.array([0.5]),))
    b = PdeTerm("b", "n", s, lambda f, p, c: (np.array([np.sqrt(0.75)]),))
    pb = _problem([a, b])
    total, _, terms = pb.evaluate(np.zeros(pb.n_params))
    assert total == pytest.approx(1.0)
    assert terms == pytest.approx({"a": 0.25, "b": 0.75})
    zero = PdeTerm("z", "n", s, lambda f, p, c: (np.array([0.0]),))
    assert _problem([zero]).evaluate(np.zeros(pb.n_params))[0] == 0.0


def test_cavity_zero_network_term_by_term():
    pb = build_parametric_cavity(CavityConfig(n_interior=40, n_wall=8, n_values=2), seed=0)
    theta = np.zeros(pb.n_params)
    total, _, terms = pb.evaluate(theta)
    assert terms["L_T"] == 1.0
    assert terms["L_W"] == 0.0
    assert terms["L_A_bottom"] == terms["L_A_top"] == 0.0
    # independent recomputation of the residual term for the zero network:
    # only the buoyancy constant survives in momentum-y
    c = pb.meta["config"]
    assert terms["L_NS"] == pytest.approx(c.g ** 2, rel=1e-14)
    assert total == pytest.approx(sum(terms.values()), rel=1e-14)


def test_problem_gradient_matches_finite_differences(rng):
    pb = build_parametric_cavity(CavityConfig(n_interior=20, n_wall=6, n_values=2, hidden=(6, 6)), seed=1)
    theta = pb.init_theta(1) + rng.normal(scale=0.1, size=pb.n_params)
    _, g, _ = pb.evaluate(theta, with_grad=True)
    fd = finite_difference_gradient(lambda t: pb.evaluate(t)[0], theta)
    assert np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(fd))) < 1e-6


def test_problem_contracts():
    s = _points(5)
    with pytest.raises(ContractError):
        _problem([DirichletTerm("a", "n", s, "u"), DirichletTerm("a", "n", s, "v")])
    with pytest.raises(ContractError):
        _problem([DirichletTerm("a", "other", s, "u")])
    with pytest.raises(ContractError):
        DirichletTerm("a", "n", s, "u", weight=0.0)
    with pytest.raises(ContractError):
        DirichletTerm("a", "n", s, ("u", "v"), [0.0])
