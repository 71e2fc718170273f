from dataclasses import replace

import pytest
import torch

from src.exceptions import DimensionError, NegativeThresholdError
from src.optim import (
    BinConnectState,
    SplitState,
    add_weight_decay,
    bc_step,
    blended_bc_step,
    descent_monitor,
    equilibrium_residual,
    gl_penalty_step,
    gsbc_prox_point,
    gsbc_step,
    lagrangian,
    rgsm_step,
    sgd_step,
    successive_difference,
)
from src.schemas.sparsity.groups import ChannelMask, GroupPartition
from src.schemas.training.stage import Method, Penalty, StageConfig
from src.services.pipeline.strategies import full_batch_loss_and_grads, make_strategy

ROWS = GroupPartition(target="w", shape=(2, 2), axis=0)


def _random_state(generator, lam: float, beta: float, eta: float = 0.05):
    params = {
        "w": torch.randn((5, 4), generator=generator, dtype=torch.float64),
        "b": torch.randn((3,), generator=generator, dtype=torch.float64),
    }
    grads = {name: torch.randn(t.shape, generator=generator, dtype=torch.float64) for name, t in params.items()}
    part = GroupPartition(target="w", shape=(5, 4), axis=0)
    return SplitState.init(params, {"w": part}, eta=eta, beta=beta, lam=lam), grads


class TestSplittingRules:
    def test_rgsm_example(self):
        w = {"w": torch.tensor([[3.0, 4.0], [0.1, 0.1]], dtype=torch.float64)}
        state = SplitState.init(w, {"w": ROWS}, eta=0.1, beta=1.0, lam=1.0)
        updated = rgsm_step(state, {"w": torch.zeros((2, 2), dtype=torch.float64)})
        torch.testing.assert_close(updated.u["w"], torch.tensor([[2.4, 3.2], [0.0, 0.0]], dtype=torch.float64))
        torch.testing.assert_close(updated.w["w"], torch.tensor([[2.94, 3.92], [0.09, 0.09]], dtype=torch.float64))

    def test_one_dimensional_quadratic(self):
        # loss w^2 / 2, so the gradient at a point is the point itself
        part = GroupPartition(target="w", shape=(1,), axis=0)
        state = SplitState.init({"w": torch.tensor([2.0], dtype=torch.float64)}, {"w": part}, eta=0.1, beta=1.0, lam=0.5)
        assert state.u["w"].tolist() == [1.5]
        assert rgsm_step(state, {"w": state.w["w"]}).w["w"].item() == pytest.approx(1.75, abs=1e-15)

        state = SplitState.init({"w": torch.tensor([2.0], dtype=torch.float64)}, {"w": part}, eta=0.1, lam=0.5)
        point = gsbc_prox_point(state)
        assert gsbc_step(state, {"w": point["w"]}).w["w"].item() == pytest.approx(1.85, abs=1e-15)

    def test_gsbc_prox_point_is_prox_point(self):
        w = {"w": torch.tensor([[3.0, 4.0], [0.1, 0.1]], dtype=torch.float64)}
        state = SplitState.init(w, {"w": ROWS}, eta=0.1, lam=1.0)
        point = gsbc_prox_point(state)
        torch.testing.assert_close(point["w"], torch.tensor([[2.4, 3.2], [0.0, 0.0]], dtype=torch.float64))

    def test_gsbc_has_no_coupling_term(self):
        w = {"w": torch.tensor([[3.0, 4.0], [0.1, 0.1]], dtype=torch.float64)}
        state = SplitState.init(w, {"w": ROWS}, eta=0.5, lam=1.0)
        grad = {"w": torch.ones((2, 2), dtype=torch.float64)}
        updated = gsbc_step(state, grad)
        torch.testing.assert_close(updated.w["w"], w["w"] - 0.5)

    def test_gl0_penalty_drives_hard_threshold(self):
        w = {"w": torch.tensor([[3.0, 4.0], [1.0, 1.0]], dtype=torch.float64)}
        state = SplitState.init(w, {"w": ROWS}, eta=0.1, beta=1.0, lam=2.0, penalty=Penalty.GL0)
        assert torch.equal(state.u["w"], torch.tensor([[3.0, 4.0], [0.0, 0.0]], dtype=torch.float64))

    def test_missing_gradient(self, generator):
        state, grads = _random_state(generator, lam=0.1, beta=1.0)
        del grads["b"]
        with pytest.raises(DimensionError):
            rgsm_step(state, grads)

    def test_invalid_state(self):
        with pytest.raises(ValueError):
            SplitState.init({"w": torch.zeros((2, 2), dtype=torch.float64)}, {"w": ROWS}, eta=0.0)


class TestReductionIdentities:
    """Degenerate parameters reduce the rules to their plain counterparts bit for bit."""

    def test_rgsm_with_zero_lambda_is_sgd(self, generator):
        for _ in range(100):
            beta = float(torch.rand(1, generator=generator)) * 5.0
            state, grads = _random_state(generator, lam=0.0, beta=beta)
            updated = rgsm_step(state, grads)
            expected = sgd_step(state.w, grads, state.eta)
            for name in expected:
                assert torch.equal(updated.w[name], expected[name])

    def test_gsbc_with_zero_lambda_is_sgd(self, generator):
        for _ in range(100):
            state, grads = _random_state(generator, lam=0.0, beta=0.0)
            point = gsbc_prox_point(state)
            for name in point:
                assert torch.equal(point[name], state.w[name])
            updated = gsbc_step(state, grads)
            expected = sgd_step(state.w, grads, state.eta)
            for name in expected:
                assert torch.equal(updated.w[name], expected[name])

    def test_blended_with_zero_rho_is_bc(self, generator):
        for _ in range(100):
            w_f = {
                "w": torch.randn((5, 4), generator=generator, dtype=torch.float64),
                "b": torch.randn((3,), generator=generator, dtype=torch.float64),
            }
            grads = {name: torch.randn(t.shape, generator=generator, dtype=torch.float64) for name, t in w_f.items()}
            state = BinConnectState.init(w_f, eta=0.05, rho=0.0, binary_names=("w",))
            blended = blended_bc_step(state, grads)
            plain = bc_step(state, grads)
            for name in w_f:
                assert torch.equal(blended.w_f[name], plain.w_f[name])
                assert torch.equal(blended.w[name], plain.w[name])


class TestBinaryConnect:
    def test_bc_example(self):
        state = BinConnectState.init({"w": torch.tensor([0.5, -1.5], dtype=torch.float64)}, eta=1.0)
        assert state.w["w"].tolist() == [1.0, -1.0]
        updated = bc_step(state, {"w": torch.tensor([0.25, 0.25], dtype=torch.float64)})
        assert updated.w_f["w"].tolist() == [0.25, -1.75]
        assert updated.w["w"].tolist() == [1.0, -1.0]

    def test_rho_one_is_projected_gradient(self):
        state = BinConnectState.init({"w": torch.tensor([0.5, -1.5], dtype=torch.float64)}, eta=0.5, rho=1.0)
        updated = blended_bc_step(state, {"w": torch.tensor([1.0, 1.0], dtype=torch.float64)})
        assert updated.w_f["w"].tolist() == [0.5, -1.5]

    def test_unlisted_tensors_stay_float(self):
        w_f = {"w": torch.tensor([0.5, -1.5], dtype=torch.float64), "b": torch.tensor([0.3], dtype=torch.float64)}
        state = BinConnectState.init(w_f, eta=0.1, binary_names=("w",))
        assert torch.equal(state.w["b"], w_f["b"])

    def test_masked_projection_keeps_zeros(self):
        part = GroupPartition(target="w", shape=(2, 2), axis=0)
        w_f = {"w": torch.tensor([[1.0, -3.0], [0.0, 0.0]], dtype=torch.float64)}
        state = BinConnectState.init(w_f, eta=0.1, partitions={"w": part}, mask=ChannelMask(bits=(1, 0)))
        assert state.w["w"].tolist() == [[2.0, -2.0], [0.0, 0.0]]

    def test_rho_out_of_range(self):
        with pytest.raises(ValueError):
            BinConnectState.init({"w": torch.ones(2, dtype=torch.float64)}, eta=0.1, rho=1.5)


class TestGroupLassoAndSGD:
    def test_gl_penalty_step_example(self):
        w = torch.tensor([[3.0, 4.0], [0.0, 0.0]], dtype=torch.float64)
        updated = gl_penalty_step(w, torch.zeros_like(w), mu=1.0, eta=0.1, part=ROWS)
        torch.testing.assert_close(updated, torch.tensor([[2.94, 3.92], [0.0, 0.0]], dtype=torch.float64))

    def test_gl_penalty_step_without_partition_is_sgd(self):
        w = torch.tensor([1.0, 2.0], dtype=torch.float64)
        g = torch.tensor([1.0, 1.0], dtype=torch.float64)
        assert torch.equal(gl_penalty_step(w, g, mu=0.5, eta=0.5), w - 0.5 * g)

    def test_gl_penalty_rejects_negative_mu(self):
        w = torch.zeros((2, 2), dtype=torch.float64)
        with pytest.raises(NegativeThresholdError):
            gl_penalty_step(w, w, mu=-1.0, eta=0.1, part=ROWS)

    def test_weight_decay_only_on_named_tensors(self):
        params = {"w": torch.ones(2, dtype=torch.float64), "b": torch.ones(1, dtype=torch.float64)}
        grads = {"w": torch.zeros(2, dtype=torch.float64), "b": torch.zeros(1, dtype=torch.float64)}
        decayed = add_weight_decay(grads, params, 0.1, ["w"])
        assert decayed["w"].tolist() == [0.1, 0.1]
        assert decayed["b"].tolist() == [0.0]


class TestDescentMonitor:
    def test_counts_increases(self):
        assert descent_monitor([3.0, 2.0, 2.5, 1.0, 1.0]) == 1

    def test_tolerance(self):
        assert descent_monitor([1.0, 1.0 + 1e-11]) == 0
        assert descent_monitor([1.0, 1.0 + 1e-9]) == 1

    def test_short_histories(self):
        assert descent_monitor([]) == 0
        assert descent_monitor([5.0]) == 0


def _quadratic_problem(generator):
    """l(w) = 0.5 ||A (w - w_star)||^2 over a 5 x 4 matrix with singular values of A in [2, 4]."""
    q1, _ = torch.linalg.qr(torch.randn((20, 20), generator=generator, dtype=torch.float64))
    q2, _ = torch.linalg.qr(torch.randn((20, 20), generator=generator, dtype=torch.float64))
    s = (4.0 + 12.0 * torch.rand(20, generator=generator, dtype=torch.float64)).sqrt()
    a = q1 @ torch.diag(s) @ q2.T
    hessian = a.T @ a
    w_star = torch.randn((5, 4), generator=generator, dtype=torch.float64) * 2.0
    w_star[1] = 0.0
    w_star[3] = 0.0

    def loss(w: torch.Tensor) -> float:
        return 0.5 * float((a @ (w - w_star).reshape(-1)).pow(2).sum())

    def grad(w: torch.Tensor) -> torch.Tensor:
        return (hessian @ (w - w_star).reshape(-1)).reshape(5, 4)

    return loss, grad


def _run_rgsm(generator, eta: float, iterations: int, lam: float = 0.5, beta: float = 1.0):
    loss, grad = _quadratic_problem(generator)
    part = GroupPartition(target="w", shape=(5, 4), axis=0)
    w0 = torch.randn((5, 4), generator=generator, dtype=torch.float64)
    state = SplitState.init({"w": w0}, {"w": part}, eta=eta, beta=beta, lam=lam)
    history = [lagrangian(state, loss(state.w["w"]))]
    previous = state
    for _ in range(iterations):
        previous = state.refreshed()
        state = rgsm_step(state, {"w": grad(state.w["w"])})
        history.append(lagrangian(state.refreshed(), loss(state.w["w"])))
    return state, previous, history, grad


class TestConvergenceOnConvexProblem:
    def test_small_step_descends_to_equilibrium(self, generator):
        state, previous, history, grad = _run_rgsm(generator, eta=1e-3, iterations=5000)
        assert descent_monitor(history) == 0
        # u still lags one step behind w after rgsm_step
        residual = equilibrium_residual(state, {"w": grad(state.w["w"])})
        assert residual.r_prox < 1e-4
        assert residual.r_grad < 1e-4
        assert successive_difference(previous, state.refreshed()) < 1e-8

    def test_lag_residual_is_positive_early(self, generator):
        state, _, _, _ = _run_rgsm(generator, eta=1e-3, iterations=3)
        assert equilibrium_residual(state, {"w": torch.zeros_like(state.w["w"])}).r_prox > 0.0
        assert equilibrium_residual(state.refreshed(), {"w": torch.zeros_like(state.w["w"])}).r_prox == 0.0

    def test_limit_is_group_sparse(self, generator):
        state, _, _, _ = _run_rgsm(generator, eta=1e-3, iterations=5000, lam=2.0)
        norms = state.refreshed().u["w"].norm(dim=1)
        assert int((norms == 0).sum()) >= 1

    def test_large_step_violates_descent(self, generator):
        _, _, history, _ = _run_rgsm(generator, eta=10.0, iterations=20)
        assert descent_monitor(history) >= 1


class TestLagrangian:
    def test_equal_split_has_no_coupling(self):
        w = {"w": torch.tensor([[3.0, 4.0]], dtype=torch.float64)}
        part = GroupPartition(target="w", shape=(1, 2), axis=0)
        state = SplitState(w=w, u=dict(w), partitions={"w": part}, eta=0.1, beta=1.0, lam=1.0)
        assert lagrangian(state, 0.0) == pytest.approx(5.0, abs=1e-12)

    def test_zero_u_pays_the_full_gap(self):
        w = {"w": torch.tensor([[3.0, 4.0]], dtype=torch.float64)}
        part = GroupPartition(target="w", shape=(1, 2), axis=0)
        u = {"w": torch.zeros((1, 2), dtype=torch.float64)}
        state = SplitState(w=w, u=u, partitions={"w": part}, eta=0.1, beta=2.0, lam=1.0)
        assert lagrangian(state, 1.0) == pytest.approx(26.0, abs=1e-12)

    def test_residual_away_from_equilibrium(self, generator):
        state, grads = _random_state(generator, lam=0.5, beta=1.0)
        u = {"w": torch.randn((5, 4), generator=generator, dtype=torch.float64)}
        residual = equilibrium_residual(replace(state, u=u), grads)
        assert residual.r_prox > 0.0
        assert residual.r_grad > 0.0

    def test_split_strategy_reports_lagrangian_at_fresh_prox(self, tiny_model, tiny_dataset):
        config = StageConfig(method=Method.RGSM, eta=0.05, epochs=1, batch_size=8, lam=0.3, beta=1.0)
        strategy = make_strategy(tiny_model, config)
        features, labels = tiny_dataset.train()
        for start in range(0, 40, 8):
            strategy.step(features[start : start + 8], labels[start : start + 8], config.eta)
        loss, _ = full_batch_loss_and_grads(tiny_model, features, labels, strategy.state.w)
        reported = strategy.diagnostics(features, labels)["lagrangian"]
        assert reported == pytest.approx(lagrangian(strategy.state.refreshed(), loss), abs=1e-12)
        assert reported != pytest.approx(lagrangian(strategy.state, loss), abs=1e-12)
