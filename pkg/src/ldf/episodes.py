"""Corpora, N-way K-shot multi-label episode sampling, and synthetic data.

Corpus files are JSON Lines, one ``{"text": ..., "labels": [...]}`` object per
line. A dataset is three such files (train/dev/test) over disjoint classes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .errors import FormatError, ParseError, SamplingError


@dataclass(frozen=True)
class Instance:
    text: str
    labels: tuple


@dataclass
class Corpus:
    instances: list
    classes: list = None
    index: dict = None
    # class -> keyword tokens; only set for synthetic corpora
    keywords: dict = field(default_factory=dict)
    # class-name blocks (train/dev/test) for synthetic corpora
    splits: list = field(default_factory=list)

    def __post_init__(self):
        if self.classes is None or self.index is None:
            index = {}
            for i, inst in enumerate(self.instances):
                for lab in inst.labels:
                    index.setdefault(lab, []).append(i)
            self.classes = sorted(index)
            self.index = {c: index[c] for c in self.classes}

    def __len__(self):
        return len(self.instances)

    def subset(self, classes):
        """Instances having a label in ``classes``, with labels restricted to them."""
        keep = set(classes)
        out = []
        for inst in self.instances:
            labs = tuple(lab for lab in inst.labels if lab in keep)
            if labs:
                out.append(Instance(inst.text, labs))
        kw = {c: v for c, v in self.keywords.items() if c in keep}
        return Corpus(out, keywords=kw)


@dataclass
class Episode:
    classes: list
    support: list  # N lists of K Instances
    queries: list  # M Instances
    labels: np.ndarray  # (M, N) 0/1

    @property
    def n_way(self):
        return len(self.classes)

    @property
    def k_shot(self):
        return len(self.support[0]) if self.support else 0


def load_corpus(path):
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno, path) from None
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                raise FormatError('expected an object with a string "text"', lineno, path)
            labels = obj.get("labels")
            if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
                raise FormatError('"labels" must be a list of strings', lineno, path)
            if not labels:
                raise FormatError("instance has an empty label list", lineno, path)
            instances.append(Instance(obj["text"], tuple(dict.fromkeys(labels))))
    return Corpus(instances)


def save_corpus(corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            fh.write(json.dumps({"text": inst.text, "labels": list(inst.labels)}) + "\n")


def sample_episode(corpus, n_way, k_shot, queries_per_class, rng):
    """Draw one N-way K-shot episode.

    Classes are drawn uniformly without replacement, then K support and
    ``queries_per_class`` query instances per class, never reusing an
    instance. A query that also carries another sampled class simply gets
    both bits set; since draws exclude used instances, M stays
    ``n_way * queries_per_class``.
    """
    if n_way < 1 or k_shot < 1 or queries_per_class < 0:
        raise SamplingError(f"bad episode shape n_way={n_way} k_shot={k_shot} q={queries_per_class}")
    if len(corpus.classes) < n_way:
        raise SamplingError(f"corpus has {len(corpus.classes)} classes, need {n_way}")
    need = k_shot + queries_per_class
    picks = rng.choice(len(corpus.classes), size=n_way, replace=False)
    classes = [corpus.classes[i] for i in picks]
    for c in classes:
        if len(corpus.index[c]) < need:
            raise SamplingError(f"class {c!r} has {len(corpus.index[c])} instances, need {need}")

    used = set()

    def draw(c, k):
        pool = [i for i in corpus.index[c] if i not in used]
        if len(pool) < k:
            raise SamplingError(f"class {c!r}: only {len(pool)} unused instances left, need {k}")
        chosen = [pool[j] for j in rng.choice(len(pool), size=k, replace=False)]
        used.update(chosen)
        return chosen

    support = [[corpus.instances[i] for i in draw(c, k_shot)] for c in classes]
    query_ids = []
    for c in classes:
        query_ids.extend(draw(c, queries_per_class))
    queries = [corpus.instances[i] for i in query_ids]
    col = {c: n for n, c in enumerate(classes)}
    labels = np.zeros((len(queries), n_way), dtype=np.int64)
    for i, q in enumerate(queries):
        for lab in q.labels:
            if lab in col:
                labels[i, col[lab]] = 1
    return Episode(classes, support, queries, labels)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

_FUNCTION_WORDS = ["the", "a", "an", "and", "was", "is", "it", "to", "of", "we",
                   "i", "for", "in", "with", "but", "very", "really", "so", "this", "that"]


def _directions(n, dim, rng):
    """``n`` unit vectors, mutually orthogonal when ``n <= dim``."""
    g = rng.normal(size=(dim, max(n, 1)))
    if n <= dim:
        q, _ = np.linalg.qr(g)
        return q[:, :n].T.copy()
    return (g / np.linalg.norm(g, axis=0)).T[:n].copy()


def make_synthetic_corpus(n_classes, instances_per_class, keyword_strength, noise_vocab_size,
                          label_similarity_groups, rng, *, dim=50, class_splits=None,
                          keywords_per_class=4, sentence_length=(6, 10), noise_fraction=0.5,
                          multi_label_fraction=0.0, group_cosine=0.9):
    """Generate a labelled corpus and a matching embedding table.

    Each class ``c`` is named ``sg<g>_aspect<c>`` (two label tokens: a
    group token and a class token). Its label embedding is the mean of those
    two vectors; keyword tokens ``kw<c>x<j>`` sit at cosine
    ``keyword_strength`` from it. ``label_similarity_groups`` pairs of
    classes per split share a group token, giving their label embeddings
    cosine ``group_cosine``; every other class has a private group token.
    Sentences mix keywords with shared noise tokens at ``noise_fraction`` of
    the token mass (none when ``noise_vocab_size`` is 0). Multi-label
    sentences union two classes' keywords from the same split.

    ``class_splits`` (e.g. ``(12, 4, 8)``) partitions classes into
    consecutive blocks; the returned corpus records them in
    ``corpus.splits``. Returns ``(corpus, table)``.
    """
    if not (0.0 < keyword_strength <= 1.0):
        raise ValueError("keyword_strength must be in (0, 1]")
    if n_classes < 1 or instances_per_class < 1:
        raise ValueError("n_classes and instances_per_class must be positive")
    splits = tuple(class_splits) if class_splits else (n_classes,)
    if sum(splits) != n_classes:
        raise ValueError(f"class_splits {splits} do not sum to {n_classes}")

    # group assignment: the first 2*g classes of each split form g pairs
    group_of = list(range(n_classes))
    start = 0
    for size in splits:
        for g in range(min(label_similarity_groups, size // 2)):
            a = start + 2 * g
            group_of[a + 1] = group_of[a]
        start += size

    group_ids = sorted(set(group_of))
    dirs = _directions(len(group_ids) + n_classes, dim, rng)
    group_vec = {g: dirs[i] for i, g in enumerate(group_ids)}
    class_dir = dirs[len(group_ids):]

    # label = (group + class)/2; for paired classes cos = a^2/(a^2+b^2)
    a = np.sqrt(group_cosine)
    b = np.sqrt(1.0 - group_cosine)
    vectors = {}
    names = []
    labels_vec = []
    for c in range(n_classes):
        g = group_of[c]
        gtok, ctok = f"sg{g}", f"aspect{c}"
        paired = group_of.count(g) > 1
        gv = 2.0 * a * group_vec[g] if paired else group_vec[g]
        cv = 2.0 * b * class_dir[c] if paired else class_dir[c]
        vectors.setdefault(gtok, gv)
        vectors[ctok] = cv
        names.append(f"{gtok}_{ctok}")
        labels_vec.append((vectors[gtok] + cv) / 2.0)

    keywords = {}
    for c in range(n_classes):
        u = labels_vec[c] / np.linalg.norm(labels_vec[c])
        toks = []
        for j in range(keywords_per_class):
            r = rng.normal(size=dim)
            r -= (r @ u) * u
            r /= np.linalg.norm(r)
            v = keyword_strength * u + np.sqrt(max(0.0, 1.0 - keyword_strength ** 2)) * r
            tok = f"kw{c}x{j}"
            vectors[tok] = v
            toks.append(tok)
        keywords[names[c]] = toks

    noise = []
    for j in range(noise_vocab_size):
        tok = _FUNCTION_WORDS[j] if j < len(_FUNCTION_WORDS) else f"filler{j}"
        v = rng.normal(size=dim)
        vectors[tok] = v / np.linalg.norm(v)
        noise.append(tok)

    lo, hi = sentence_length

    def sentence(kw_sets):
        n = int(rng.integers(lo, hi + 1))
        n_noise = int(round(n * noise_fraction)) if noise else 0
        n_kw = max(len(kw_sets), n - n_noise)
        words = [kw_sets[i % len(kw_sets)][int(rng.integers(len(kw_sets[i % len(kw_sets)])))]
                 for i in range(n_kw)]
        words += [noise[int(rng.integers(len(noise)))] for _ in range(n_noise)]
        rng.shuffle(words)
        return " ".join(words)

    block_of = []
    for s, size in enumerate(splits):
        block_of += [s] * size
    instances = []
    for c in range(n_classes):
        peers = [d for d in range(n_classes) if d != c and block_of[d] == block_of[c]]
        for _ in range(instances_per_class):
            if peers and rng.random() < multi_label_fraction:
                d = peers[int(rng.integers(len(peers)))]
                text = sentence([keywords[names[c]], keywords[names[d]]])
                instances.append(Instance(text, (names[c], names[d])))
            else:
                instances.append(Instance(sentence([keywords[names[c]]]), (names[c],)))

    order = rng.permutation(len(instances))
    offsets = np.cumsum((0,) + splits)
    blocks = [names[offsets[i]:offsets[i + 1]] for i in range(len(splits))]
    corpus = Corpus([instances[i] for i in order], keywords=keywords, splits=blocks)
    table = EmbeddingTable.from_dict(vectors, dim)
    return corpus, table
