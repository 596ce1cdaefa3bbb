"""Attention prototypical network with label-guided support attention.

Pipeline for one episode:

* encode: embedding lookup -> conv1d (window 3, same length) -> relu
* support attention: additive self-attention scores ``tanh(H W_a) v_a``;
  with LAS the scores are mixed per position with the label/word cosine
  through a 2->1 affine gate and re-normalised
* instance representation: attention-weighted sum of H rows
* prototype: mean of the K instance representations
* query: scaled dot-product attention with each prototype as the probe,
  giving N prototype-specific representations
* scores: softmax over classes of the negative Euclidean distances
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .embeddings import build_label_embedding, tokenize
from .errors import ConfigError, FormatError, InstanceError

PARAM_ORDER = ("conv_w", "conv_b", "att_w", "att_v", "gate_w", "gate_b", "unk")
INIT_STD = 0.1
DEFAULT_THRESHOLDS = {5: 0.3, 10: 0.2}


class ModelParams:
    """Named trainable tensors, initialised from N(0, 0.1^2) in ``PARAM_ORDER``."""

    def __init__(self, tensors, dim, hidden, window=3):
        self.tensors = dict(tensors)
        self.dim = dim
        self.hidden = hidden
        self.window = window

    @classmethod
    def init(cls, dim, rng, hidden=50, window=3, embedding=None):
        if window % 2 == 0:
            raise ConfigError(f"convolution window must be odd, got {window}")
        shapes = {
            "conv_w": (window, dim, hidden),
            "conv_b": (hidden,),
            "att_w": (hidden, hidden),
            "att_v": (hidden, 1),
            "gate_w": (1, 2),
            "gate_b": (1,),
            "unk": (dim,),
        }
        tensors = {
            name: Tensor(rng.normal(0.0, INIT_STD, size=shapes[name]), requires_grad=True, name=name)
            for name in PARAM_ORDER
        }
        if embedding is not None:
            # fine-tuned copy of the pretrained matrix
            tensors["embedding"] = Tensor(np.array(embedding, dtype=np.float64),
                                          requires_grad=True, name="embedding")
        return cls(tensors, dim, hidden, window)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def parameters(self):
        return list(self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self):
        return ModelParams({k: Tensor(v.data.copy(), requires_grad=True, name=k)
                            for k, v in self.tensors.items()}, self.dim, self.hidden, self.window)

    # -- checkpoint I/O --------------------------------------------------------

    def to_dict(self):
        return {
            name: {"shape": list(t.shape), "data": [float(x) for x in t.data.ravel()]}
            for name, t in self.tensors.items()
        }

    @classmethod
    def from_dict(cls, params, dim, hidden, window=3):
        tensors = {}
        for name, entry in params.items():
            arr = np.array(entry["data"], dtype=np.float64)
            shape = tuple(entry["shape"])
            if arr.size != int(np.prod(shape)):
                raise FormatError(f"parameter {name}: {arr.size} values for shape {shape}")
            tensors[name] = Tensor(arr.reshape(shape), requires_grad=True, name=name)
        missing = [n for n in PARAM_ORDER if n not in tensors]
        if missing:
            raise FormatError(f"checkpoint lacks parameters {missing}")
        if tensors["conv_w"].shape != (window, dim, hidden):
            raise FormatError(
                f"conv_w shape {tensors['conv_w'].shape} does not match dim={dim} hidden={hidden}"
            )
        return cls(tensors, dim, hidden, window)


def save_checkpoint(path, params, meta=None):
    """JSON checkpoint: ``{"format", "dim", "hidden", "window", "meta", "params"}``.

    Floats are written with ``repr`` precision, so loading restores every
    parameter bit for bit.
    """
    doc = {
        "format": "ldf-checkpoint/1",
        "dim": params.dim,
        "hidden": params.hidden,
        "window": params.window,
        "meta": meta or {},
        "params": params.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Returns ``(params, meta)``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a checkpoint ({exc.msg})") from None
    if doc.get("format") != "ldf-checkpoint/1":
        raise FormatError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    params = ModelParams.from_dict(doc["params"], doc["dim"], doc["hidden"], doc.get("window", 3))
    return params, doc.get("meta", {})


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------

@dataclass
class EncodedBatch:
    """Padded batch: ``H`` (B, L, hidden), word vectors ``E`` (B, L, dim),
    ``mask`` (B, L) True at real tokens."""

    H: Tensor
    E: np.ndarray
    mask: np.ndarray
    tokens: list


def encode(texts, table, params, max_len=64):
    """Encode a list of sentences into one padded batch.

    OOV words feed the trainable ``unk`` row to the encoder but a zero
    vector to ``E``, so they never look similar to a label.
    """
    token_lists = []
    for text in texts:
        toks = tokenize(text)[:max_len]
        if not toks:
            raise InstanceError(f"sentence is empty after tokenization: {text!r}")
        token_lists.append(toks)
    B = len(token_lists)
    L = max(len(t) for t in token_lists)
    ids = np.full((B, L), -1, dtype=np.intp)
    mask = np.zeros((B, L), dtype=bool)
    for b, toks in enumerate(token_lists):
        ids[b, :len(toks)] = table.ids(toks)
        mask[b, :len(toks)] = True
    known = ids >= 0
    E = np.zeros((B, L, table.dim))
    E[known] = table.matrix[ids[known]]
    oov = (mask & ~known)[..., None].astype(np.float64)

    if "embedding" in params:
        gathered = ad.take(params["embedding"], np.where(known, ids, 0))
        X = ad.mul(gathered, known[..., None].astype(np.float64))
    else:
        X = Tensor(E)
    X = ad.add(X, ad.mul(oov, params["unk"]))
    H = ad.relu(ad.conv1d_same(X, params["conv_w"], params["conv_b"]))
    return EncodedBatch(H, E, mask, token_lists)


# ---------------------------------------------------------------------------
# attention pieces
# ---------------------------------------------------------------------------

def attention_scores(H, params):
    """Pre-normalisation additive attention scores ``tanh(H W_a) v_a`` -> (..., L)."""
    s = ad.matmul(ad.tanh(ad.matmul(H, params["att_w"])), params["att_v"])
    return ad.reshape(s, s.shape[:-1])


def base_attention(H, mask, params):
    """beta = masked softmax of the additive attention scores."""
    return ad.softmax(attention_scores(H, params), mask)


def label_similarity(E, mask, label_vec):
    """alpha_i = cos(label, e_i) at real positions, 0 at padding.

    ``E`` is (..., L, dim); ``label_vec`` broadcasts against it (e.g. (..., 1, dim)).
    """
    a = ad.cosine(E, label_vec).data
    return np.where(mask, a, 0.0)


def gate_logits(alpha, scores, params):
    """theta_i = W_g [alpha_i; s_i] + b_g, applied independently at every position."""
    pair = ad.stack([ad.as_tensor(alpha), scores], axis=-1)
    theta = ad.matmul(pair, ad.swapaxes(params["gate_w"], 0, 1))
    return ad.add(ad.reshape(theta, theta.shape[:-1]), params["gate_b"])


def gated_attention(alpha, scores, mask, params):
    """Re-normalised gated attention.

    ``scores`` are the pre-softmax attention scores, so the pass-through gate
    W_g = (0, 1), b_g = 0 gives back the base attention exactly.
    """
    return ad.softmax(gate_logits(alpha, scores, params), mask)


def instance_representation(H, weights):
    """sum_i weights_i H_i for (..., L) weights and (..., L, hidden) H."""
    w = ad.reshape(weights, weights.shape[:-1] + (1, weights.shape[-1]))
    r = ad.matmul(w, H)
    return ad.reshape(r, r.shape[:-2] + (r.shape[-1],))


def aggregate_prototype(reps):
    """Average pooling over the K axis: (..., K, hidden) -> (..., hidden)."""
    return ad.mean(reps, axis=-2)


def query_attention(H_q, mask, prototypes):
    """Scaled dot-product weights of each query word against each prototype -> (M, N, L) logits."""
    hidden = prototypes.shape[-1]
    s = ad.matmul(H_q, ad.swapaxes(prototypes, 0, 1))  # (M, L, N)
    return ad.mul(ad.swapaxes(s, 1, 2), 1.0 / math.sqrt(hidden))


def query_representation(H_q, mask, prototypes, weights=None):
    """N prototype-specific representations per query: (M, L, h) -> (M, N, h)."""
    if weights is None:
        weights = ad.softmax(query_attention(H_q, mask, prototypes), mask[:, None, :])
    return ad.matmul(weights, H_q)


def score_query(prototypes, query_reps):
    """softmax_n(-||r^n - r_i^n||) for prototypes (N, h) and query reps (M, N, h) -> (M, N)."""
    d = ad.euclidean_distance(query_reps, prototypes)
    return ad.softmax(ad.mul(d, -1.0))


def threshold_for(n_way, threshold=None):
    if threshold is not None:
        return float(threshold)
    try:
        return DEFAULT_THRESHOLDS[n_way]
    except KeyError:
        raise ConfigError(f"no default threshold for {n_way}-way episodes; configure one") from None


def predict(scores, n_way=None, threshold=None):
    """Bit n set iff score_n > threshold (0.3 for 5-way, 0.2 for 10-way by default)."""
    scores = np.asarray(scores.data if isinstance(scores, Tensor) else scores)
    if n_way is None:
        n_way = scores.shape[-1]
    return (scores > threshold_for(n_way, threshold)).astype(np.int64)


# ---------------------------------------------------------------------------
# whole episode
# ---------------------------------------------------------------------------

class LabelBank:
    """Caches label embeddings per class name for one embedding table."""

    def __init__(self, table):
        self.table = table
        self._cache = {}

    def vector(self, class_name):
        if class_name not in self._cache:
            self._cache[class_name] = build_label_embedding(class_name, self.table).vector
        return self._cache[class_name]

    def matrix(self, classes):
        return np.stack([self.vector(c) for c in classes])


@dataclass
class EpisodeOutput:
    scores: Tensor            # (M, N) class scores per query
    support_reps: Tensor      # (N*K, hidden) instance representations, class-major
    prototypes: Tensor        # (N, hidden)
    support_attention: np.ndarray  # (N*K, L) attention used to build the reps
    support_tokens: list      # N*K token lists, same order as support_reps
    support_classes: np.ndarray    # (N*K,) class index of each rep
    label_vectors: np.ndarray      # (N, dim)


def _canonical(instances):
    return sorted(instances, key=lambda inst: (inst.text, inst.labels))


def episode_forward(episode, params, table, labels=None, *, use_las=False, las_on_query=False,
                    max_len=64):
    """Run the network on one episode.

    Support instances are put in a canonical order within each class first,
    so shuffling a class's support set leaves the prototype bit-identical.
    """
    labels = labels if labels is not None else LabelBank(table)
    N = episode.n_way
    K = episode.k_shot
    support = [inst for cls in episode.support for inst in _canonical(cls)]
    enc = encode([s.text for s in support], table, params, max_len)
    label_vecs = labels.matrix(episode.classes)
    support_cls = np.repeat(np.arange(N), K)

    scores = attention_scores(enc.H, params)
    if use_las:
        alpha = label_similarity(enc.E, enc.mask, label_vecs[support_cls][:, None, :])
        att = gated_attention(alpha, scores, enc.mask, params)
    else:
        att = ad.softmax(scores, enc.mask)
    reps = instance_representation(enc.H, att)
    protos = aggregate_prototype(ad.reshape(reps, (N, K, reps.shape[-1])))

    qenc = encode([q.text for q in episode.queries], table, params, max_len)
    qmask = qenc.mask[:, None, :]
    qlogits = query_attention(qenc.H, qenc.mask, protos)
    if use_las and las_on_query:
        q_alpha = label_similarity(qenc.E[:, None, :, :], qmask, label_vecs[None, :, None, :])
        qweights = gated_attention(q_alpha, qlogits, qmask, params)
    else:
        qweights = ad.softmax(qlogits, qmask)
    qreps = query_representation(qenc.H, qenc.mask, protos, qweights)
    y_hat = score_query(protos, qreps)
    return EpisodeOutput(y_hat, reps, protos, att.data, enc.tokens, support_cls, label_vecs)
