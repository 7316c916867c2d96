import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgmvp.circuits import (
    AnsatzConfig,
    CircuitError,
    FeasibleAnsatz,
    ansatz_program,
    apply_block,
    apply_mixer,
    block_gates,
    equal_weighted_lots,
    gmvp_continuous,
    initial_lots,
    kkt_residual,
    maxbias_lots,
    mixer_pairs,
    prepare_initial,
    run_ansatz,
    run_program_dense,
    warm_start_round,
)
from dgmvp.encoding import EncodingSpec, bits_to_str, encode, feasible_indices, bits_to_index
from dgmvp.hamiltonian import build_cost_model
from dgmvp.market import factor_model_covariance
from dgmvp.pauli import PauliSum, carry_minus, exchange_minus, support_decompose
from dgmvp.simulator import basis_state, probabilities, zero_state


def infeasible_mass(spec, state):
    mask = np.ones(state.shape[-1], dtype=bool)
    mask[feasible_indices(spec)] = False
    return probabilities(state)[mask].sum()


def test_gmvp_identity_and_diag():
    assert np.allclose(gmvp_continuous(np.eye(4)), 0.25)
    assert np.allclose(gmvp_continuous(np.diag([1.0, 4.0])), [0.8, 0.2])


def test_gmvp_clamps_negative_weights():
    sigma = np.array([[1.0, 1.5], [1.5, 4.0]])  # closed form gives (1.25, -0.25)
    w = gmvp_continuous(sigma)
    assert np.allclose(w, [1.0, 0.0])
    assert kkt_residual(sigma, w) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_gmvp_beats_random_simplex_points(seed, n):
    rng = np.random.default_rng(seed)
    sigma = factor_model_covariance(rng, n).sigma
    w = gmvp_continuous(sigma)
    assert w.min() >= 0 and abs(w.sum() - 1) < 1e-12
    assert kkt_residual(sigma, w) < 1e-8
    probes = rng.dirichlet(np.ones(n), size=1000)
    assert w @ sigma @ w <= np.einsum("bi,ij,bj->b", probes, sigma, probes).min() + 1e-12


def test_warm_start_examples():
    spec = EncodingSpec(2, 2)
    assert warm_start_round(spec, [0.5, 0.5]) == (2, 1)
    assert warm_start_round(spec, [2 / 3, 1 / 3]) == (2, 1)
    assert warm_start_round(EncodingSpec(3, 2), [1.0, 0.0, 0.0]) == (3, 0, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_warm_start_feasible_and_close(n, l, seed):
    spec = EncodingSpec(n, l)
    w = np.random.default_rng(seed).dirichlet(np.ones(n))
    lots = warm_start_round(spec, w)
    assert sum(lots) == spec.max_lots
    assert np.all(np.abs(np.array(lots) - w * spec.max_lots) < 1 + 1e-9)


def test_initial_state_examples():
    spec = EncodingSpec(3, 2)
    assert bits_to_str(encode(spec, maxbias_lots(spec))) == "110000"
    assert equal_weighted_lots(spec) == (1, 1, 1)
    assert equal_weighted_lots(EncodingSpec(2, 2)) == (2, 1)
    sigma = np.eye(3)
    for kind in ("maxbias", "warm_started", "equal_weighted", "random_weighted"):
        lots = initial_lots(kind, spec, sigma, np.random.default_rng(0))
        assert sum(lots) == 3
    with pytest.raises(CircuitError):
        initial_lots("warm_started", spec)
    with pytest.raises(CircuitError):
        initial_lots("dicke", spec)


def test_prepare_initial_sets_basis_state():
    spec = EncodingSpec(3, 2)
    s = prepare_initial(zero_state(6), spec, (3, 0, 0))
    assert s[0b000011] == 1


def test_mixer_pairs():
    assert mixer_pairs(2, 1) == [(0, 1)]
    assert mixer_pairs(3, 1) == [(0, 1), (1, 2), (2, 0)]
    assert mixer_pairs(4, 2) == [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3)]
    with pytest.raises(CircuitError):
        mixer_pairs(4, 3)


def test_block_layer_order():
    spec = EncodingSpec(2, 3)
    kinds = [k for k, _ in block_gates(spec, 0, 1)]
    assert kinds == ["two-excitation"] * 3 + ["three-excitation"] * 2 + ["two-excitation"] * 3
    # odd offset first: carries into bit 1, then into bit 2
    assert [t for k, t in block_gates(spec, 0, 1) if k == "three-excitation"] == [(1, 0, 3), (2, 1, 4)]


def test_block_zero_beta_is_identity():
    spec = EncodingSpec(2, 2)
    psi = basis_state(4, bits_to_index(encode(spec, (2, 1))))
    assert np.array_equal(apply_block(psi.copy(), spec, 0, 1, 0.0), psi)


@pytest.mark.parametrize("n,l,distance", [(2, 2, 1), (3, 2, 1), (4, 2, 1), (4, 2, 2), (3, 3, 1)])
def test_mixer_conserves_budget(n, l, distance):
    spec = EncodingSpec(n, l)
    rng = np.random.default_rng(n * 10 + l)
    for idx in feasible_indices(spec):
        psi = basis_state(spec.num_qubits, int(idx))
        for beta in rng.uniform(-np.pi, np.pi, 3):
            apply_mixer(psi, spec, distance, beta)
        assert infeasible_mass(spec, psi) < 1e-10


def test_larger_distance_support_includes_nearest_neighbour():
    spec = EncodingSpec(4, 2)
    start = basis_state(8, bits_to_index(encode(spec, maxbias_lots(spec))))
    near = apply_mixer(start.copy(), spec, 1, 0.4)
    far = apply_mixer(start.copy(), spec, 2, 0.4)
    assert set(np.flatnonzero(probabilities(near) > 1e-14)) <= set(np.flatnonzero(probabilities(far) > 1e-14))


def test_reachable_states_from_excitation_graph():
    # l=2 pair block: from (3, 0) every split of the 3 lots is reachable
    spec = EncodingSpec(2, 2)
    psi = apply_block(basis_state(4, bits_to_index(encode(spec, (3, 0)))), spec, 0, 1, 0.6)
    support = set(np.flatnonzero(probabilities(psi) > 1e-14).tolist())
    assert support == set(feasible_indices(spec).tolist())


def test_block_generator_support():
    spec = EncodingSpec(2, 2)
    u = np.stack([apply_block(basis_state(4, i), spec, 0, 1, 0.7) for i in range(16)], axis=1)
    # qubits: asset 0 bits (0, 1), asset 1 bits (2, 3)
    generators = [exchange_minus(4, 2, 0), exchange_minus(4, 3, 1), carry_minus(4, 1, 0, 2)]
    for g in generators:
        dec = support_decompose(u, [PauliSum.identity(4), g])
        assert abs(dec.coefficients[1]) > 1e-3


def test_ansatz_config_wrap_and_json():
    cfg = AnsatzConfig("maxbias", 1, 2, [7.0, -1.0, 0.5, 0.25], seed=3)
    assert all(0 <= x < 2 * np.pi for x in cfg.params)
    assert AnsatzConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(CircuitError):
        AnsatzConfig("dicke", 1, 1)


def test_p_zero_and_identity_layers():
    spec = EncodingSpec(3, 2)
    model = build_cost_model(spec, np.eye(3))
    init = run_ansatz(AnsatzConfig("maxbias", 1, 0), model, spec)
    assert np.array_equal(probabilities(init), probabilities(prepare_initial(zero_state(6), spec, (3, 0, 0))))
    ident = run_ansatz(AnsatzConfig("maxbias", 1, 2, [0.0] * 4), model, spec)
    assert abs(abs(np.vdot(init, ident)) - 1) < 1e-12


def test_wrong_param_count():
    spec = EncodingSpec(2, 2)
    with pytest.raises(CircuitError):
        run_ansatz(AnsatzConfig("maxbias", 1, 2, [0.1]), build_cost_model(spec, np.eye(2)), spec)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(3, 2, 1), (4, 2, 2), (2, 3, 1)]), st.booleans())
def test_three_paths_agree(seed, shape, per_pair):
    n, l, distance = shape
    rng = np.random.default_rng(seed)
    spec = EncodingSpec(n, l)
    sigma = factor_model_covariance(rng, n).sigma
    model = build_cost_model(spec, sigma)
    p = 2
    cfg = AnsatzConfig("random_weighted", distance, p, seed=seed % 1000, per_pair_beta=per_pair)
    cfg = cfg.with_params(rng.uniform(0, 2 * np.pi, cfg.n_params(spec)))
    dense = run_ansatz(cfg, model, spec)
    assert infeasible_mass(spec, dense) < 1e-10
    lots = initial_lots("random_weighted", spec, rng=np.random.default_rng(cfg.seed))
    gates = run_program_dense(ansatz_program(cfg, model, spec, lots), spec.num_qubits)
    engine = FeasibleAnsatz(spec, model, distance)
    sub = engine.embed(engine.run(cfg, lots))
    # the gate path keeps the cost constant as a global phase; compare probabilities and overlaps
    assert np.allclose(probabilities(dense), probabilities(gates), atol=1e-12)
    assert abs(abs(np.vdot(dense, gates)) - 1) < 1e-10
    assert abs(abs(np.vdot(dense, sub)) - 1) < 1e-10
