import copy
import dataclasses
import json

import numpy as np
import pytest

from ldf import autodiff as ad
from ldf.embeddings import EmbeddingTable
from ldf.episodes import make_synthetic_corpus, sample_episode
from ldf.errors import ConfigError, FormatError, NumericError
from ldf.losses import mse_loss
from ldf.model import LabelBank, ModelParams, load_checkpoint
from ldf.trainer import (
    ABLATIONS,
    TrainConfig,
    episode_loss,
    evaluate,
    evaluate_checkpoint,
    forward,
    load_config,
    train,
)


@pytest.fixture(scope="module")
def world():
    corpus, table = make_synthetic_corpus(16, 20, 0.8, 10, 1, ad.make_rng(3), dim=16,
                                          class_splits=(8, 8), multi_label_fraction=0.2)
    tr, dv = (corpus.subset(s) for s in corpus.splits)
    return tr, dv, table


def small(**kw):
    base = dict(epochs=2, episodes_per_epoch=15, eval_episodes=8, hidden=12)
    base.update(kw)
    return TrainConfig(**base)


# -- config ------------------------------------------------------------------

def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nn_way = 10\nk_shot=1\nlambda = 0.5\nuse_las = false\n"
                 "train_path = data/train.jsonl  # relative\nthreshold = none\n")
    cfg = load_config(str(p))
    assert (cfg.n_way, cfg.k_shot, cfg.lam, cfg.use_las, cfg.threshold) == (10, 1, 0.5, False, None)
    assert cfg.train_path == str(tmp_path / "data" / "train.jsonl")


def test_config_unknown_key(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("n_wya = 5\n")
    with pytest.raises(ConfigError, match="n_wya"):
        load_config(str(p))


@pytest.mark.parametrize("bad", [dict(use_lcl=True, use_scl=True), dict(n_way=1),
                                 dict(window=4), dict(tau=0.0), dict(lam=-1.0)])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_defaults_are_full_model():
    cfg = TrainConfig()
    assert cfg.ablation == "ldf"
    assert (cfg.lr, cfg.tau, cfg.lam, cfg.n_way, cfg.k_shot) == (1e-3, 0.1, 0.2, 5, 5)


@pytest.mark.parametrize("name", sorted(ABLATIONS))
def test_ablation_roundtrip(name):
    assert TrainConfig().with_ablation(name).ablation == name


def test_unknown_ablation():
    with pytest.raises(ConfigError):
        TrainConfig().with_ablation("nope")


def test_config_dict_roundtrip():
    cfg = small(seed=7, use_las=False)
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# -- loss wiring -------------------------------------------------------------

def one_episode(world, seed=0):
    tr, _, table = world
    ep = sample_episode(tr, 5, 5, 5, ad.make_rng(seed))
    params = ModelParams.init(table.dim, ad.make_rng(1), hidden=12)
    return ep, params, table


def test_lambda_zero_is_base_loss(world):
    ep, params, table = one_episode(world)
    cfg = small(lam=0.0, use_las=False)
    out = forward(ep, params, table, LabelBank(table), cfg)
    assert episode_loss(out, ep, cfg).item() == mse_loss(out.scores, ep.labels).item()


def test_lcl_equals_scl_with_identical_labels(world):
    ep, params, table = one_episode(world)
    cfg_l = small(use_las=False)
    cfg_s = cfg_l.with_ablation("scl")
    out = forward(ep, params, table, LabelBank(table), cfg_l)
    same = dataclasses.replace(out, label_vectors=np.ones_like(out.label_vectors))
    a = episode_loss(same, ep, cfg_l).item()
    b = episode_loss(same, ep, cfg_s).item()
    assert abs(a - b) < 1e-12


# -- training ----------------------------------------------------------------

def test_first_losses_deterministic(world):
    tr, dv, table = world
    a = train(small(epochs=1), tr, dv, table).losses[:10]
    b = train(small(epochs=1), tr, dv, table).losses[:10]
    assert a == b


def test_different_seed_differs(world):
    tr, dv, table = world
    a = train(small(epochs=1), tr, dv, table).losses[:10]
    b = train(small(epochs=1, seed=6), tr, dv, table).losses[:10]
    assert a != b


def test_training_does_not_mutate_inputs(world):
    tr, dv, table = world
    before = copy.deepcopy((tr.instances, dv.instances, table.matrix, table.vocab))
    train(small(epochs=1, freeze_embeddings=False), tr, dv, table)
    after = (tr.instances, dv.instances, table.matrix, table.vocab)
    assert before[:2] == after[:2] and np.array_equal(before[2], after[2])
    assert before[3] == after[3]


def test_early_stopping_keeps_best(world, tmp_path):
    tr, dv, table = world
    cfg = small(epochs=12, patience=1, lr=0.05, checkpoint_dir=str(tmp_path))
    res = train(cfg, tr, dv, table)
    aucs = [h["dev_auc"] for h in res.history]
    assert res.best_dev_auc == max(aucs)
    assert aucs[res.best_epoch] == res.best_dev_auc
    if len(aucs) < cfg.epochs:
        assert aucs[-1] <= res.best_dev_auc
        assert len(aucs) - 1 - res.best_epoch == cfg.patience
    saved, meta = load_checkpoint(str(tmp_path / "best.json"))
    for k in saved.tensors:
        assert np.array_equal(saved[k].data, res.params[k].data)
    assert meta["best_dev_auc"] == res.best_dev_auc


def test_checkpoint_reproduces_dev_auc(world, tmp_path):
    tr, dv, table = world
    res = train(small(checkpoint_dir=str(tmp_path)), tr, dv, table)
    _, runs = evaluate_checkpoint(res.checkpoint, dv, table=table)
    (dev,) = runs.values()
    assert abs(dev.auc - res.best_dev_auc) < 1e-9


def test_evaluate_is_pure(world):
    tr, dv, table = world
    params = ModelParams.init(table.dim, ad.make_rng(2), hidden=12)
    snap = params.copy()
    a = evaluate(params, dv, table, small(), seed=4)
    b = evaluate(params, dv, table, small(), seed=4)
    assert a.episode_auc == b.episode_auc
    for k in params.tensors:
        assert np.array_equal(params[k].data, snap[k].data)


def test_nonfinite_loss_raises(world):
    tr, dv, table = world
    bad = EmbeddingTable(table.dim, dict(table.vocab), table.matrix.copy())
    bad.matrix[:] = np.nan
    with pytest.raises(NumericError, match="seed 5"):
        train(small(epochs=1), tr, dv, bad)


def test_dim_mismatch_on_eval(world, tmp_path):
    tr, dv, table = world
    res = train(small(epochs=1, checkpoint_dir=str(tmp_path)), tr, dv, table)
    other = EmbeddingTable.from_dict({"x": np.ones(table.dim + 1)})
    with pytest.raises(FormatError):
        evaluate_checkpoint(res.checkpoint, dv, table=other)
