import numpy as np
import pytest

from msda_few.autodiff import Tensor
from msda_few.data import DomainTransform, SynthConfig, synth_mixed
from msda_few.exceptions import DimensionError, ParameterError
from msda_few.nets import ClassifierHead, FeatureExtractor
from msda_few.trainer import (METRICS_HEADER, Batch, ModelConfig, Networks, OptimizerState,
                              TrainConfig, TrainingAborted, compute_losses, evaluate, lr_at,
                              metrics_to_csv, sgd_momentum_step, train, train_step)

SMALL_MODEL = ModelConfig(feature_dim=6, hidden=[8], disc_hidden=8, dropout=0.5)


def tiny_dataset(seed=0, **kw):
    base = dict(n_classes=4, n_alpha_classes=2, samples_per_class=20,
                target_samples_per_class=10, seed=seed)
    base.update(kw)
    return synth_mixed(SynthConfig(**base))


def tiny_cfg(**kw):
    base = dict(total_iters=30, batch_alpha=8, batch_beta=8, batch_target=16, model=SMALL_MODEL,
                eval_every=10)
    base.update(kw)
    return TrainConfig(**base)


class TestLearningRate:
    def test_origin(self):
        assert lr_at(0) == 0.001

    def test_thousand(self):
        assert lr_at(1000) == pytest.approx(0.001 * 2 ** -0.75, abs=1e-12)
        assert lr_at(1000) == pytest.approx(5.9460e-4, rel=1e-4)

    def test_defaults(self):
        opt = OptimizerState()
        assert (opt.base_lr, opt.gamma, opt.power, opt.momentum) == (0.001, 0.001, 0.75, 0.9)

    def test_negative_iteration(self):
        with pytest.raises(ParameterError):
            lr_at(-1)


def param(v):
    return Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)


class TestSgd:
    def test_plain_step(self):
        p = {"x": param([1.0, 2.0])}
        opt = OptimizerState(momentum=0.0, base_lr=0.1, gamma=0.0)
        sgd_momentum_step(p, {"x": np.array([1.0, -1.0])}, opt, 0)
        np.testing.assert_allclose(p["x"].value, [0.9, 2.1], atol=1e-15)

    def test_two_momentum_steps(self):
        p = {"x": param(0.0)}
        opt = OptimizerState(momentum=0.9, base_lr=0.1, gamma=0.0)
        sgd_momentum_step(p, {"x": np.array(1.0)}, opt, 0)
        assert p["x"].value == pytest.approx(-0.1, abs=1e-15)
        sgd_momentum_step(p, {"x": np.array(1.0)}, opt, 1)
        assert opt.velocities["x"] == pytest.approx(1.9, abs=1e-15)
        assert p["x"].value == pytest.approx(-0.29, abs=1e-15)

    def test_zero_gradient_decays_velocity(self):
        p = {"x": param([3.0])}
        opt = OptimizerState(momentum=0.9, base_lr=0.1, gamma=0.0, velocities={"x": np.zeros(1)})
        sgd_momentum_step(p, {"x": None}, opt, 0)
        assert p["x"].value.tolist() == [3.0]
        opt.velocities["x"] = np.array([1.0])
        sgd_momentum_step(p, {"x": np.zeros(1)}, opt, 0)
        assert opt.velocities["x"].tolist() == [0.9]

    def test_multiplier(self):
        p = {"x": param(0.0)}
        sgd_momentum_step(p, {"x": np.array(1.0)}, OptimizerState(base_lr=0.1, gamma=0.0), 0,
                          multiplier=10.0)
        assert p["x"].value == pytest.approx(-1.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sgd_momentum_step({"x": param([0.0])}, {"x": np.zeros(2)}, OptimizerState(), 0)


class TestEvaluate:
    def setup_method(self):
        self.G = FeatureExtractor(2, [], 2, np.random.default_rng(0), last_activation=False)
        W, b = self.G.layers[0]
        W.value, b.value = np.eye(2), np.zeros(2)
        self.head = ClassifierHead(2, 2, np.random.default_rng(0))

    def test_perfect(self):
        self.head.w.value = np.eye(2) * 50
        X = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.1]])
        assert evaluate(self.G, self.head, X, [1, 2, 1]) == 1.0

    def test_uniform_head_picks_class_one(self):
        self.head.w.value = np.zeros((2, 2))
        X = np.ones((4, 2))
        assert evaluate(self.G, self.head, X, [1, 2, 1, 2]) == 0.5

    def test_counting(self):
        self.head.w.value = np.eye(2)
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
        assert evaluate(self.G, self.head, X, [1, 2, 1, 2]) == 0.75

    def test_unknown_labels_skipped(self):
        self.head.w.value = np.eye(2)
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert evaluate(self.G, self.head, X, [1, -1]) == 1.0


class TestComputeLosses:
    def batch(self, rng, m=4, d=2):
        return Batch(rng.normal(size=(m, d)), np.array([1, 2, 1, 2]), rng.normal(size=(m, d)),
                     np.array([3, 4, 3, 4]), rng.normal(size=(2 * m, d)))

    @pytest.mark.parametrize("method,v1,v2", [("few", True, True), ("cdan+dann", True, True),
                                              ("cdan", False, True), ("dann", False, True),
                                              ("source-only", False, False)])
    def test_active_terms(self, rng, method, v1, v2):
        cfg = tiny_cfg(method=method)
        nets = Networks.build(2, 4, SMALL_MODEL, 0, conditional=cfg.v2_kind != "marginal")
        losses = compute_losses(nets, self.batch(rng), 0, cfg)
        assert isinstance(losses.V1, Tensor) == v1
        assert isinstance(losses.V2, Tensor) == v2

    def test_disable_v1(self, rng):
        cfg = tiny_cfg(method="few", disable_v1=True)
        nets = Networks.build(2, 4, SMALL_MODEL, 0)
        assert compute_losses(nets, self.batch(rng), 0, cfg).V1 == 0.0

    def test_ablation_uses_unit_weights(self, rng):
        nets = Networks.build(2, 4, SMALL_MODEL, 0)
        b = self.batch(rng)
        a = compute_losses(nets, b, 500, tiny_cfg(method="cdan+dann")).V1.item()
        z = compute_losses(nets, b, 500, tiny_cfg(method="few", delta_override=0.0)).V1.item()
        w = compute_losses(nets, b, 500, tiny_cfg(method="few")).V1.item()
        assert a == z
        assert a != w


class TestTrain:
    def test_records_and_eval_points(self):
        _, recs = train(tiny_dataset(), tiny_cfg(total_iters=25))
        assert [r.iter for r in recs] == list(range(25))
        assert [r.iter for r in recs if r.target_acc is not None] == [9, 19, 24]
        assert all(np.isfinite([r.l_cls, r.v1, r.v2, r.total]).all() for r in recs)

    def test_deterministic(self):
        a = metrics_to_csv(train(tiny_dataset(), tiny_cfg())[1])
        b = metrics_to_csv(train(tiny_dataset(), tiny_cfg())[1])
        assert a == b
        assert a.splitlines()[0] == ",".join(METRICS_HEADER)

    def test_few_with_zero_delta_matches_ablation(self):
        a = train(tiny_dataset(), tiny_cfg(method="few", delta_override=0.0))[1]
        b = train(tiny_dataset(), tiny_cfg(method="cdan+dann"))[1]
        key = lambda r: (r.l_cls, r.v1, r.v2, r.total, r.target_acc)  # noqa: E731
        assert [key(r) for r in a] == [key(r) for r in b]

    def test_cdan_and_few_split_after_first_step(self):
        a = train(tiny_dataset(), tiny_cfg(method="cdan", total_iters=3))[1]
        b = train(tiny_dataset(), tiny_cfg(method="few", total_iters=3))[1]
        assert (a[0].l_cls, a[0].v2) == (b[0].l_cls, b[0].v2)
        assert a[0].v1 == 0.0 and b[0].v1 != 0.0
        assert a[1].l_cls != b[1].l_cls

    def test_source_only_learns_unshifted_data(self):
        ident = DomainTransform()
        ds = tiny_dataset(seed=1, samples_per_class=50, target_samples_per_class=50,
                          prototype_spread=4.0, class_noise=0.2, alpha=ident, beta=ident,
                          target=ident)
        cfg = TrainConfig(method="source-only", total_iters=1000, eval_every=1000, seed=1,
                          optimizer=OptimizerState(base_lr=0.01))
        assert train(ds, cfg)[1][-1].target_acc >= 0.99

    def test_divergence_aborts_with_last_record(self):
        cfg = tiny_cfg(optimizer=OptimizerState(base_lr=1e300, gamma=0.0), total_iters=50)
        with pytest.raises(TrainingAborted) as info:
            train(tiny_dataset(), cfg)
        assert "iteration" in str(info.value)

    def test_invalid_method(self):
        with pytest.raises(ParameterError):
            TrainConfig(method="mcd")


def test_parameter_groups_cover_all():
    nets = Networks.build(2, 3, SMALL_MODEL, 0)
    groups = nets.parameter_groups()
    assert set(groups["backbone"]) == {n for n in nets.named_parameters() if n.startswith("G.")}
    merged = {**groups["backbone"], **groups["new"]}
    assert merged.keys() == nets.named_parameters().keys()


def test_gradients_cleared_after_step(rng):
    nets = Networks.build(2, 4, SMALL_MODEL, 0)
    b = TestComputeLosses().batch(rng)
    train_step(nets, OptimizerState(), b, 0, tiny_cfg())
    assert all(t.grad is None or not t.grad.any() for t in nets.named_parameters().values())
