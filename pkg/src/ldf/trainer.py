"""Episodic training, evaluation and the multi-seed protocol."""

import ast
import configparser
import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .embeddings import load_vectors, tokenize
from .episodes import Corpus, load_corpus, sample_episode
from .errors import ConfigError, FormatError, NumericError
from .losses import lcl_loss, mse_loss, scl_loss, total_loss
from .metrics import EpisodeScores, auc, build_report, episode_metrics, macro_f1
from .model import LabelBank, ModelParams, episode_forward, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (5, 10, 15, 20, 25)

ABLATIONS = {
    "base": dict(use_las=False, use_lcl=False, use_scl=False),
    "las": dict(use_las=True, use_lcl=False, use_scl=False),
    "lcl": dict(use_las=False, use_lcl=True, use_scl=False),
    "scl": dict(use_las=False, use_lcl=False, use_scl=True),
    "ldf": dict(use_las=True, use_lcl=True, use_scl=False),
}


@dataclass
class TrainConfig:
    n_way: int = 5
    k_shot: int = 5
    queries_per_class: int = 5
    epochs: int = 30
    episodes_per_epoch: int = 800
    eval_episodes: int = 600
    lr: float = 1e-3
    tau: float = 0.1
    lam: float = 0.2
    patience: int = 3
    seed: int = 5
    use_las: bool = True
    use_lcl: bool = True
    use_scl: bool = False
    las_on_query: bool = False
    strict_negatives: bool = False
    hidden: int = 50
    window: int = 3
    max_len: int = 64
    threshold: float = None
    freeze_embeddings: bool = True
    # dev/test episodes are drawn from these seeds (default: derived from seed)
    dev_seed: int = None
    test_seed: int = None
    train_path: str = None
    dev_path: str = None
    test_path: str = None
    embeddings_path: str = None
    checkpoint_dir: str = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.use_lcl and self.use_scl:
            raise ConfigError("use_lcl and use_scl are mutually exclusive")
        for name in ("n_way", "k_shot", "queries_per_class", "epochs", "episodes_per_epoch",
                     "eval_episodes", "patience", "hidden", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_way < 2:
            raise ConfigError("n_way must be at least 2")
        if self.lr <= 0 or self.tau <= 0 or self.lam < 0:
            raise ConfigError("lr and tau must be positive and lambda non-negative")
        if self.window % 2 == 0:
            raise ConfigError(f"window must be odd, got {self.window}")

    @property
    def ablation(self):
        for name, flags in ABLATIONS.items():
            if all(getattr(self, k) == v for k, v in flags.items()):
                return name
        return "custom"

    @property
    def resolved_dev_seed(self):
        return self.dev_seed if self.dev_seed is not None else 100_003 * (self.seed + 1)

    @property
    def resolved_test_seed(self):
        return self.test_seed if self.test_seed is not None else 200_003 * (self.seed + 1)

    def with_ablation(self, name):
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        return dataclasses.replace(self, **ABLATIONS[name])

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _parse_value(raw):
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError):
        return raw.strip()


def load_config(path):
    """Flat ``key = value`` file (``#`` comments); keys are TrainConfig fields.

    Relative paths inside the file are resolved against the file's directory.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[config]\n" + fh.read())
    values = {k: _parse_value(v) for k, v in parser["config"].items()}
    base = os.path.dirname(os.path.abspath(path))
    for k in ("train_path", "dev_path", "test_path", "embeddings_path", "checkpoint_dir"):
        if isinstance(values.get(k), str) and not os.path.isabs(values[k]):
            values[k] = os.path.join(base, values[k])
    return TrainConfig.from_dict(values)


def drop_empty(corpus, max_len=64):
    """Remove instances with no tokens, logging how many went."""
    keep = [inst for inst in corpus.instances if tokenize(inst.text)]
    if len(keep) < len(corpus.instances):
        log.warning("skipping %d instances that are empty after tokenization",
                    len(corpus.instances) - len(keep))
        return Corpus(keep, keywords=corpus.keywords, splits=corpus.splits)
    return corpus


# ---------------------------------------------------------------------------
# single episode
# ---------------------------------------------------------------------------

def episode_loss(out, episode, config):
    mse = mse_loss(out.scores, episode.labels)
    contrastive = None
    if config.use_lcl:
        contrastive = lcl_loss(out.support_reps, out.label_vectors, out.support_classes,
                               config.tau, config.strict_negatives)
    elif config.use_scl:
        contrastive = scl_loss(out.support_reps, out.support_classes, config.tau,
                               config.strict_negatives)
    return total_loss(mse, contrastive, config.lam)


def forward(episode, params, table, labels, config):
    return episode_forward(episode, params, table, labels, use_las=config.use_las,
                           las_on_query=config.las_on_query, max_len=config.max_len)


def keyword_attention_mass(out, episode, keywords):
    """Mean attention mass a support instance puts on its own class's keyword tokens."""
    masses = []
    for row, (toks, c) in enumerate(zip(out.support_tokens, out.support_classes)):
        kw = set(keywords.get(episode.classes[c], ()))
        hit = np.array([t in kw for t in toks], dtype=bool)
        masses.append(float(out.support_attention[row, :len(toks)][hit].sum()))
    return float(np.mean(masses))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    f1: float
    auc: float
    episode_f1: list
    episode_auc: list
    keyword_mass: list = field(default_factory=list)

    def as_dict(self):
        return {"f1": self.f1, "auc": self.auc, "episodes": len(self.episode_f1)}


def evaluate(params, corpus, table, config, seed, n_episodes=None, labels=None, keywords=None):
    """Score ``n_episodes`` episodes drawn from ``seed``; forward passes only."""
    n_episodes = config.eval_episodes if n_episodes is None else n_episodes
    labels = labels or LabelBank(table)
    rng = ad.make_rng(seed)
    scored, f1s, aucs, masses = [], [], [], []
    with ad.no_grad():
        for _ in range(n_episodes):
            ep = sample_episode(corpus, config.n_way, config.k_shot, config.queries_per_class, rng)
            out = forward(ep, params, table, labels, config)
            es = EpisodeScores(out.scores.data, ep.labels, config.n_way)
            scored.append(es)
            f1s.append(macro_f1(es, config.threshold))
            aucs.append(auc(es))
            if keywords:
                masses.append(keyword_attention_mass(out, ep, keywords))
    summary = episode_metrics(scored, config.threshold)
    return EvalResult(summary["f1"], summary["auc"], f1s, aucs, masses)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    best_dev_auc: float
    best_epoch: int
    history: list
    losses: list
    checkpoint: str = None


def _load_data(config, train_corpus, dev_corpus, table):
    if table is None:
        if not config.embeddings_path:
            raise ConfigError("embeddings_path is required")
        table = load_vectors(config.embeddings_path)
    if train_corpus is None:
        train_corpus = load_corpus(config.train_path)
    if dev_corpus is None:
        dev_corpus = load_corpus(config.dev_path)
    return drop_empty(train_corpus), drop_empty(dev_corpus), table


def _checkpoint_meta(config, dev_auc, epoch, table):
    return {"config": config.to_dict(), "best_dev_auc": dev_auc, "epoch": epoch,
            "dev_seed": config.resolved_dev_seed, "embedding_dim": table.dim,
            "kernels": kernels.BACKEND}


def train(config, train_corpus=None, dev_corpus=None, table=None, progress=None):
    """Episodic training with best-dev-AUC model selection and early stopping.

    One Adam step per training episode. After every epoch the model is scored
    on ``eval_episodes`` dev episodes drawn from the same dev seed, so epochs
    are compared on identical episodes.
    """
    train_corpus, dev_corpus, table = _load_data(config, train_corpus, dev_corpus, table)
    init_rng, episode_rng = ad.split_rngs(config.seed, 2)
    params = ModelParams.init(
        table.dim, init_rng, hidden=config.hidden, window=config.window,
        embedding=None if config.freeze_embeddings else table.matrix,
    )
    opt = ad.Adam(params.parameters(), lr=config.lr)
    labels = LabelBank(table)

    best = None
    best_auc = -math.inf
    best_epoch = -1
    stale = 0
    history = []
    losses = []
    ckpt_dir = config.checkpoint_dir
    if ckpt_dir:
        os.makedirs(ckpt_dir, exist_ok=True)

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        epoch_losses = []
        for step in range(config.episodes_per_epoch):
            ep = sample_episode(train_corpus, config.n_way, config.k_shot,
                                config.queries_per_class, episode_rng)
            out = forward(ep, params, table, labels, config)
            loss = episode_loss(out, ep, config)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} at epoch {epoch} step {step} (seed {config.seed})"
                )
            ad.backward(loss)
            opt.step()
            epoch_losses.append(value)
        losses.extend(epoch_losses)

        dev = evaluate(params, dev_corpus, table, config, config.resolved_dev_seed, labels=labels)
        improved = dev.auc > best_auc
        record = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)),
                  "dev_auc": dev.auc, "dev_f1": dev.f1, "seconds": time.perf_counter() - t0}
        history.append(record)
        log.info("epoch %d loss %.4f dev AUC %.4f F1 %.4f", epoch, record["train_loss"],
                 dev.auc, dev.f1)
        if progress:
            progress(record)
        if improved:
            best_auc, best_epoch, stale = dev.auc, epoch, 0
            best = params.copy()
            if ckpt_dir:
                save_checkpoint(os.path.join(ckpt_dir, "best.json"), best,
                                _checkpoint_meta(config, best_auc, epoch, table))
        else:
            stale += 1
        if ckpt_dir:
            save_checkpoint(os.path.join(ckpt_dir, "last.json"), params,
                            _checkpoint_meta(config, dev.auc, epoch, table))
        if stale >= config.patience:
            log.info("early stop after epoch %d (best epoch %d)", epoch, best_epoch)
            break

    return TrainResult(best, best_auc, best_epoch, history, losses,
                       os.path.join(ckpt_dir, "best.json") if ckpt_dir else None)


def evaluate_checkpoint(path, corpus, seeds=None, table=None, n_episodes=None):
    """Evaluate a saved checkpoint; several seeds give a per-seed summary."""
    params, meta = load_checkpoint(path)
    config = TrainConfig.from_dict(meta["config"])
    if table is None:
        table = load_vectors(config.embeddings_path)
    if table.dim != params.dim:
        raise FormatError(f"embedding dim {table.dim} does not match checkpoint dim {params.dim}",
                          path=path)
    if isinstance(corpus, str):
        corpus = load_corpus(corpus)
    corpus = drop_empty(corpus)
    seeds = list(seeds) if seeds else [meta.get("dev_seed", config.resolved_dev_seed)]
    runs = {s: evaluate(params, corpus, table, config, s, n_episodes) for s in seeds}
    return config, runs


def run_protocol(config, out_dir, seeds=DEFAULT_SEEDS, train_corpus=None, dev_corpus=None,
                 test_corpus=None, table=None, progress=None):
    """Train once per seed, score the test split, and write ``run.json`` per seed."""
    train_corpus, dev_corpus, table = _load_data(config, train_corpus, dev_corpus, table)
    if test_corpus is None:
        test_corpus = load_corpus(config.test_path)
    test_corpus = drop_empty(test_corpus)
    runs = []
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed,
                                  checkpoint_dir=os.path.join(out_dir, f"{config.ablation}-seed{seed}"))
        res = train(cfg, train_corpus, dev_corpus, table, progress)
        test = evaluate(res.params, test_corpus, table, cfg, cfg.resolved_test_seed)
        run = write_run(cfg, res, test)
        runs.append(run)
    return runs


def setting_name(config):
    return f"{config.n_way}-way {config.k_shot}-shot {config.ablation}"


def write_run(config, result, test):
    run = {"setting": setting_name(config), "seed": config.seed, "config": config.to_dict(),
           "best_dev_auc": result.best_dev_auc, "best_epoch": result.best_epoch,
           "test": test.as_dict(), "test_episode_auc": test.episode_auc,
           "test_episode_f1": test.episode_f1, "history": result.history}
    if config.checkpoint_dir:
        os.makedirs(config.checkpoint_dir, exist_ok=True)
        with open(os.path.join(config.checkpoint_dir, "run.json"), "w", encoding="utf-8") as fh:
            json.dump(run, fh, indent=1)
    return run


def collect_runs(run_dir):
    """Group every ``run.json`` under ``run_dir`` by setting into report rows."""
    groups = {}
    for root, _, files in sorted(os.walk(run_dir)):
        if "run.json" in files:
            with open(os.path.join(root, "run.json"), encoding="utf-8") as fh:
                run = json.load(fh)
            g = groups.setdefault(run["setting"], {"setting": run["setting"], "f1": [], "auc": [],
                                                   "seeds": []})
            g["f1"].append(run["test"]["f1"])
            g["auc"].append(run["test"]["auc"])
            g["seeds"].append(run["seed"])
    return build_report(list(groups.values()))
