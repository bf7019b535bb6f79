import numpy as np
import pytest
from scipy import optimize

from structprox import (
    Dataset,
    GroupStructure,
    Hyperparameters,
    ParameterSet,
    SolverFailure,
    fit,
    screen_lambda_max,
)
from structprox.objective import Design, objective, risk, risk_gradient, sigmoid, margins
from structprox.preprocessing import fit_scaler, make_design
from structprox.solver import (
    backtracking_step,
    parameter_update,
    prox_group,
    prox_ridge,
)

from conftest import default_hyper, random_instance, random_params, synthetic_instance


def group_prox_oracle(omega, threshold):
    """Numerically minimize 0.5||x-w||^2 + t*||x||_2 via its 1-D radial form.

    The minimizer is collinear with omega, so the search reduces to the radius.
    """
    r = float(np.linalg.norm(omega))
    if r == 0.0:
        return np.zeros_like(omega)
    res = optimize.minimize_scalar(
        lambda u: 0.5 * (u - r) ** 2 + threshold * u,
        bounds=(0.0, r),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return (float(res.x) / r) * omega


def ridge_prox_oracle(omega, step, lam):
    # the objective separates per coordinate, so minimize each 1-D section
    out = np.empty_like(omega)
    for j, w in enumerate(omega):
        lo, hi = min(0.0, w) - 1e-9, max(0.0, w) + 1e-9
        res = optimize.minimize_scalar(
            lambda x: 0.5 * (x - w) ** 2 + step * lam * x * x,
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-13},
        )
        out[j] = res.x
    return out


class TestProxGroup:
    def test_zero_input(self):
        np.testing.assert_array_equal(prox_group(np.zeros(3), 1.7), np.zeros(3))

    def test_three_four_block(self):
        # ||(3,4)|| = 5, threshold 2.5 -> factor 0.5
        np.testing.assert_allclose(
            prox_group(np.array([3.0, 4.0]), 2.5), [1.5, 2.0]
        )

    def test_threshold_equal_to_norm_zeroes(self):
        out = prox_group(np.array([3.0, 4.0]), 5.0)
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_threshold_above_norm_zeroes(self):
        out = prox_group(np.array([3.0, 4.0]), 5.01)
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_zero_threshold_is_identity(self):
        omega = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(prox_group(omega, 0.0), omega)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            prox_group(np.ones(2), -0.1)

    def test_matches_numerical_oracle(self):
        for seed in range(30):
            rng = np.random.default_rng(700 + seed)
            omega = rng.normal(0, 2, size=int(rng.integers(1, 9)))
            thr = float(rng.uniform(0, 1.2) * np.linalg.norm(omega) + 1e-6)
            np.testing.assert_allclose(
                prox_group(omega, thr), group_prox_oracle(omega, thr), atol=1e-6
            )

    def test_beats_random_perturbations(self):
        rng = np.random.default_rng(41)
        omega = rng.normal(0, 2, size=5)
        thr = 1.3
        out = prox_group(omega, thr)

        def f(x):
            return 0.5 * np.sum((x - omega) ** 2) + thr * np.linalg.norm(x)

        base = f(out)
        for scale in (1e-4, 1e-2, 1e-1):
            for _ in range(200):
                assert base <= f(out + rng.normal(0, scale, size=5)) + 1e-12


class TestProxRidge:
    def test_unit_vector_half(self):
        # eps * lambda_I = 0.5 -> divide by (1 + 2*0.5) = 2
        np.testing.assert_allclose(
            prox_ridge(np.array([1.0, 0.0]), 1.0, 0.5), [0.5, 0.0]
        )

    def test_lambda_zero_limit_is_identity(self):
        omega = np.array([2.0, -1.0])
        np.testing.assert_allclose(prox_ridge(omega, 1.0, 1e-300), omega, rtol=1e-12)

    def test_matches_numerical_oracle(self):
        for seed in range(30):
            rng = np.random.default_rng(800 + seed)
            omega = rng.normal(0, 2, size=int(rng.integers(1, 9)))
            step = float(rng.uniform(0.05, 1.5))
            lam = float(rng.uniform(0.01, 2.0))
            np.testing.assert_allclose(
                prox_ridge(omega, step, lam),
                ridge_prox_oracle(omega, step, lam),
                atol=1e-8,
            )


class TestParameterUpdate:
    def test_zero_gradient_zero_thresholds_is_fixed_point(self):
        d, gs, design = random_instance(50)
        p = random_params(51, design.n_imaging, gs.expanded_size)
        h = default_hyper(lambda_imaging=1e-300, lambda_genetic=1e-300,
                          lambda_interaction=1e-300)
        step = parameter_update(p, np.zeros(p.flat().size), 1.0, gs, h)
        np.testing.assert_allclose(step.params.flat(), p.flat(), rtol=1e-12)
        np.testing.assert_allclose(step.gradient_step, 0.0, atol=1e-12)

    def test_screening_keeps_block_at_zero(self):
        # gradient block norm 10 against threshold 20: stays zero
        gs = GroupStructure([[0, 1]], n_features=2, weights=[1.0])
        p = ParameterSet.zeros(1, 2)
        grad = np.zeros(p.flat().size)
        gw, gi, gg, g0 = 2, 1, 2, 1
        grad[gw + gi : gw + gi + 2] = [6.0, 8.0]
        h = default_hyper(lambda_genetic=20.0)
        step = parameter_update(p, grad, 1.0, gs, h)
        np.testing.assert_array_equal(step.params.genetic, [0.0, 0.0])

    def test_blocks_match_prox_oracles(self):
        for seed in range(10):
            d, gs, design = random_instance(900 + seed)
            p = random_params(950 + seed, design.n_imaging, gs.expanded_size)
            rng = np.random.default_rng(980 + seed)
            grad = rng.normal(size=p.flat().size)
            h = default_hyper(
                lambda_interaction=float(rng.uniform(0.05, 0.5)),
                lambda_imaging=float(rng.uniform(0.05, 0.5)),
                lambda_genetic=float(rng.uniform(0.05, 0.5)),
            )
            step = float(rng.uniform(0.1, 1.0))
            upd = parameter_update(p, grad, step, gs, h)
            gw = p.interaction - step * upd_grad_block(grad, p)[0]
            # genetic blocks
            ggrad = upd_grad_block(grad, p)[2]
            for l in range(gs.n_groups):
                blk = gs.block(l)
                omega = p.genetic[blk] - step * ggrad[blk]
                want = group_prox_oracle(omega, step * h.lambda_genetic * gs.weights[l])
                np.testing.assert_allclose(upd.params.genetic[blk], want, atol=1e-6)
                for i in range(design.n_imaging):
                    omega = gw[i, blk]
                    want = group_prox_oracle(
                        omega, step * h.lambda_interaction * gs.weights[l]
                    )
                    np.testing.assert_allclose(
                        upd.params.interaction[i, blk], want, atol=1e-6
                    )
            # imaging ridge block
            omega = p.imaging - step * upd_grad_block(grad, p)[1]
            np.testing.assert_allclose(
                upd.params.imaging,
                ridge_prox_oracle(omega, step, h.lambda_imaging),
                atol=1e-6,
            )
            # intercept is a plain gradient step
            np.testing.assert_allclose(
                upd.params.intercept, p.intercept - step * grad[-1], rtol=1e-12
            )

    def test_variant_gating(self):
        d, gs, design = random_instance(55)
        p = ParameterSet.zeros(design.n_imaging, gs.expanded_size)
        rng = np.random.default_rng(56)
        grad = rng.normal(size=p.flat().size)
        upd = parameter_update(p, grad, 1.0, gs, default_hyper(variant="additive"))
        assert not upd.params.interaction.any()
        upd = parameter_update(
            p, grad, 1.0, gs, default_hyper(variant="multiplicative")
        )
        assert not upd.params.imaging.any()
        assert not upd.params.genetic.any()


def upd_grad_block(grad, p):
    from structprox.objective import split_flat

    return split_flat(grad, p.imaging.size, p.genetic.size)


class TestBacktracking:
    def test_zero_gradient_accepts_initial_step(self):
        # with grad = 0 both sides of the acceptance inequality equal R_N
        d, gs, design = random_instance(60)
        p = ParameterSet.zeros(design.n_imaging, gs.expanded_size)
        grad = np.zeros(p.flat().size)
        h = default_hyper()
        _, step, shrinks, _ = backtracking_step(
            p, design, gs, h, grad=grad, risk_current=risk(p, design)
        )
        assert shrinks == 0
        assert step == h.step_init

    def test_accepted_step_satisfies_inequality(self):
        for seed in range(10):
            d, gs, design = random_instance(1100 + seed)
            p = random_params(1200 + seed, design.n_imaging, gs.expanded_size, scale=0.5)
            h = default_hyper()
            prox_step, step, shrinks, cand_risk = backtracking_step(p, design, gs, h)
            grad = risk_gradient(p, design)
            ghat = (p.flat() - prox_step.params.flat()) / step
            bound = risk(p, design) - step * float(grad @ ghat) + 0.5 * step * float(
                ghat @ ghat
            )
            assert cand_risk <= bound + 1e-12
            np.testing.assert_allclose(step, h.step_init * h.backtrack_factor**shrinks)

    def test_steep_instance_shrinks(self):
        # large features force at least one shrink from step 1.0
        rng = np.random.default_rng(61)
        gs = GroupStructure([[0, 1]], n_features=2)
        d = Dataset(
            rng.binomial(2, 0.5, size=(20, 2)).astype(float) * 30.0,
            rng.normal(0, 30, size=(20, 2)),
            rng.integers(0, 2, 20).astype(float),
        )
        design = Design.from_dataset(d, gs)
        p = random_params(62, 2, 2, scale=0.3)
        h = default_hyper()
        _, step, shrinks, _ = backtracking_step(p, design, gs, h)
        assert shrinks >= 1
        np.testing.assert_allclose(step, h.backtrack_factor**shrinks)


class TestFit:
    def test_all_positive_labels_intercept_only(self):
        # huge penalties force everything except the intercept to zero and
        # the fitted probabilities approach 1
        rng = np.random.default_rng(63)
        gs = GroupStructure([[0, 1], [1, 2]], n_features=3)
        d = Dataset(
            rng.binomial(2, 0.4, size=(25, 3)).astype(float),
            rng.normal(size=(25, 2)),
            np.ones(25),
        )
        design = Design.from_dataset(d, gs)
        h = default_hyper(
            lambda_interaction=50.0, lambda_imaging=50.0, lambda_genetic=50.0
        )
        p, state = fit(design, gs, h)
        assert not p.interaction.any()
        assert not p.genetic.any()
        assert p.intercept > 3.0
        probs = sigmoid(margins(p, design))
        assert probs.min() > 0.95

    def test_trace_non_increasing_and_stopping_rule(self):
        for seed in range(6):
            data = synthetic_instance(1300 + seed, label_noise=0.15)
            design = make_design(data.dataset, data.groups, fit_scaler(data.dataset))
            h = default_hyper(tol=1e-5)
            p, state = fit(design, data.groups, h)
            trace = state.trace
            assert np.all(np.diff(trace) <= 1e-12)
            assert state.converged
            assert abs(trace[-1] - trace[-2]) <= h.tol * abs(trace[-2])

    def test_reported_objective_matches_recomputation(self):
        data = synthetic_instance(64)
        design = make_design(data.dataset, data.groups, fit_scaler(data.dataset))
        h = default_hyper()
        p, state = fit(design, data.groups, h)
        val = objective(p, design, data.groups, h)
        np.testing.assert_allclose(state.history[-1].total, val.total, rtol=1e-12)

    def test_above_screening_bound_all_zero(self):
        data = synthetic_instance(65, effect_genetic=1.5)
        design = make_design(data.dataset, data.groups, fit_scaler(data.dataset))
        bounds = screen_lambda_max(design, data.groups)
        h = Hyperparameters(
            1.05 * bounds.lambda_interaction_max,
            0.5,
            1.05 * bounds.lambda_genetic_max,
        )
        p, _ = fit(design, data.groups, h)
        assert not p.genetic.any()
        assert not p.interaction.any()

    def test_ridge_only_matches_independent_optimizer(self):
        # huge group penalties leave a smooth ridge-logistic problem in
        # (imaging, intercept); scipy BFGS solves it independently
        data = synthetic_instance(66, n_samples=50, effect_imaging=1.0)
        gs = data.groups
        design = make_design(data.dataset, gs, fit_scaler(data.dataset))
        h = Hyperparameters(1e6, 0.1, 1e6, tol=1e-12)
        p, state = fit(design, gs, h)
        assert not p.interaction.any() and not p.genetic.any()

        zi = design.imaging
        y = design.labels

        def smooth(theta):
            m = zi @ theta[:-1] + theta[-1]
            r = np.mean(np.logaddexp(0.0, m) - y * m)
            return r + 0.1 * float(theta[:-1] @ theta[:-1])

        res = optimize.minimize(
            smooth,
            np.zeros(zi.shape[1] + 1),
            method="BFGS",
            options={"gtol": 1e-12, "maxiter": 2000},
        )
        ours = objective(p, design, gs, h).total
        assert ours <= res.fun + 1e-6
        np.testing.assert_allclose(ours, res.fun, atol=1e-6)
        np.testing.assert_allclose(p.imaging, res.x[:-1], atol=1e-4)
        np.testing.assert_allclose(p.intercept, res.x[-1], atol=1e-4)

    def test_variant_invariants_throughout(self):
        data = synthetic_instance(67, effect_interaction=1.0)
        design = make_design(data.dataset, data.groups, fit_scaler(data.dataset))
        p, _ = fit(design, data.groups, default_hyper(variant="additive"))
        assert not p.interaction.any()
        p, _ = fit(design, data.groups, default_hyper(variant="multiplicative"))
        assert not p.imaging.any() and not p.genetic.any()

    def test_warm_start_respects_variant(self):
        data = synthetic_instance(68)
        design = make_design(data.dataset, data.groups, fit_scaler(data.dataset))
        init = ParameterSet.zeros(design.n_imaging, data.groups.expanded_size)
        init.interaction[0, 0] = 1.0
        with pytest.raises(ValueError):
            fit(design, data.groups, default_hyper(variant="additive"), init=init)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergent_objective_raises(self):
        d, gs, design = random_instance(69)
        init = ParameterSet.zeros(design.n_imaging, gs.expanded_size)
        init.intercept = np.finfo(float).max / 4
        with pytest.raises(SolverFailure):
            fit(design, gs, default_hyper(), init=init)

    def test_max_iters_cap_reported(self):
        data = synthetic_instance(70)
        design = make_design(data.dataset, data.groups, fit_scaler(data.dataset))
        p, state = fit(design, data.groups, default_hyper(tol=1e-14, max_iters=3))
        assert not state.converged
        assert state.stop_reason == "max_iters"


class TestScreening:
    def test_balanced_labels_zero_features(self):
        gs = GroupStructure([[0, 1]], n_features=2)
        d = Dataset(
            np.zeros((6, 2)),
            np.zeros((6, 2)),
            np.array([0.0, 1.0] * 3),
        )
        design = Design.from_dataset(d, gs)
        bounds = screen_lambda_max(design, gs)
        assert bounds.lambda_genetic_max == 0.0
        assert bounds.lambda_interaction_max == 0.0

    def test_single_sample_positive_label(self):
        # residual at zero is -0.5, so the bound is 0.5 ||xG|| / theta
        gs = GroupStructure([[0, 1, 2]], n_features=3)
        xg = np.array([[1.0, 2.0, 2.0]])
        d = Dataset(xg, np.array([[1.0]]), np.array([1.0]))
        design = Design.from_dataset(d, gs)
        bounds = screen_lambda_max(design, gs)
        want = 0.5 * np.linalg.norm(xg[0]) / gs.weights[0]
        np.testing.assert_allclose(bounds.lambda_genetic_max, want, rtol=1e-12)

    def test_bounds_match_gradient_blocks(self):
        data = synthetic_instance(71, effect_genetic=1.2, effect_interaction=1.0)
        gs = data.groups
        design = make_design(data.dataset, gs, fit_scaler(data.dataset))
        bounds = screen_lambda_max(design, gs)
        p0 = ParameterSet.zeros(design.n_imaging, gs.expanded_size)
        from structprox.objective import split_flat

        gw, gi, gg, g0 = split_flat(
            risk_gradient(p0, design), design.n_imaging, gs.expanded_size
        )
        gw = gw.reshape(design.n_imaging, gs.expanded_size)
        for l in range(gs.n_groups):
            blk = gs.block(l)
            np.testing.assert_allclose(
                bounds.genetic_bounds[l],
                np.linalg.norm(gg[blk]) / gs.weights[l],
                rtol=1e-12,
            )
            np.testing.assert_allclose(
                bounds.interaction_bounds[l],
                max(np.linalg.norm(gw[i, blk]) for i in range(design.n_imaging))
                / gs.weights[l],
                rtol=1e-12,
            )
        np.testing.assert_allclose(
            bounds.lambda_genetic_max, bounds.genetic_bounds.max(), rtol=1e-15
        )
