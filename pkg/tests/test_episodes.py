import copy
import json

import numpy as np
import pytest

from ldf.autodiff import make_rng
from ldf.autodiff import cosine
from ldf.embeddings import build_label_embedding
from ldf.episodes import Corpus, Instance, load_corpus, make_synthetic_corpus, sample_episode
from ldf.errors import FormatError, ParseError, SamplingError

TABLE1 = [
    {"text": "went back today for lunch.", "labels": ["food_mealtype_lunch"]},
    {"text": "food is whats to be expected in a place like this.",
     "labels": ["food_food_meat_burger", "restaurant_location"]},
    {"text": "the burger was juicy", "labels": ["food_food_meat_burger"]},
    {"text": "great burger and fries", "labels": ["food_food_meat_burger"]},
    {"text": "burger bun was stale", "labels": ["food_food_meat_burger"]},
    {"text": "lunch specials are good", "labels": ["food_mealtype_lunch"]},
    {"text": "came here at noon for lunch", "labels": ["food_mealtype_lunch"]},
    {"text": "a quick lunch stop near the burger joint",
     "labels": ["food_mealtype_lunch", "food_food_meat_burger"]},
    {"text": "right off the highway", "labels": ["restaurant_location"]},
    {"text": "easy to find downtown", "labels": ["restaurant_location"]},
    {"text": "parking nearby the location", "labels": ["restaurant_location"]},
    {"text": "close to my office", "labels": ["restaurant_location"]},
]


def write_jsonl(tmp_path, rows, name="c.jsonl"):
    p = tmp_path / name
    p.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return str(p)


def test_load_single_instance(tmp_path):
    c = load_corpus(write_jsonl(tmp_path, TABLE1[:1]))
    assert len(c) == 1 and c.classes == ["food_mealtype_lunch"]


def test_load_multilabel(tmp_path):
    c = load_corpus(write_jsonl(tmp_path, TABLE1[1:2]))
    assert c.instances[0].labels == ("food_food_meat_burger", "restaurant_location")
    assert c.index == {"food_food_meat_burger": [0], "restaurant_location": [0]}


def test_load_empty_then_sampling_fails(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    c = load_corpus(str(p))
    assert len(c) == 0
    with pytest.raises(SamplingError):
        sample_episode(c, 2, 1, 1, make_rng(0))


def test_load_bad_json_line(tmp_path):
    p = tmp_path / "b.jsonl"
    p.write_text('{"text": "ok", "labels": ["a"]}\n{oops\n')
    with pytest.raises(ParseError) as exc:
        load_corpus(str(p))
    assert exc.value.lineno == 2


def test_load_empty_labels(tmp_path):
    with pytest.raises(FormatError):
        load_corpus(write_jsonl(tmp_path, [{"text": "x", "labels": []}]))


def check_episode(ep, corpus, n, k, q):
    assert len(ep.classes) == n == len(set(ep.classes))
    assert all(len(s) == k for s in ep.support)
    assert len(ep.queries) == n * q == ep.labels.shape[0]
    assert ep.labels.shape[1] == n
    for cls, insts in zip(ep.classes, ep.support):
        assert all(cls in inst.labels for inst in insts)
    sup = [id(i) for s in ep.support for i in s]
    qry = [id(i) for i in ep.queries]
    assert not set(sup) & set(qry)
    assert len(set(sup)) == len(sup) and len(set(qry)) == len(qry)
    for inst, row in zip(ep.queries, ep.labels):
        assert row.sum() >= 1
        for j, cls in enumerate(ep.classes):
            assert row[j] == int(cls in inst.labels)


def test_table1_shape(tmp_path):
    c = load_corpus(write_jsonl(tmp_path, TABLE1))
    hots = set()
    for seed in range(40):
        ep = sample_episode(c, 3, 2, 1, make_rng(seed))
        check_episode(ep, c, 3, 2, 1)
        hots.update(ep.labels.sum(axis=1).tolist())
    assert hots == {1, 2}


def synthetic(n_classes=10, per_class=20, **kw):
    return make_synthetic_corpus(n_classes, per_class, 1.0, 0, 0, make_rng(0), **kw)


def test_five_way_ten_shot_counts():
    c, _ = synthetic(8, 20)
    ep = sample_episode(c, 5, 10, 5, make_rng(1))
    check_episode(ep, c, 5, 10, 5)
    assert sum(len(s) for s in ep.support) == 50
    assert len(ep.queries) == 25


def test_multilabel_queries_keep_m():
    c, _ = make_synthetic_corpus(6, 20, 1.0, 0, 0, make_rng(2), multi_label_fraction=0.6)
    for seed in range(30):
        ep = sample_episode(c, 5, 3, 4, make_rng(seed))
        check_episode(ep, c, 5, 3, 4)


def test_same_seed_same_episode():
    c, _ = synthetic()
    a = sample_episode(c, 5, 5, 5, make_rng(9))
    b = sample_episode(c, 5, 5, 5, make_rng(9))
    assert a.classes == b.classes and a.support == b.support and a.queries == b.queries
    assert np.array_equal(a.labels, b.labels)


def test_sampling_does_not_mutate_corpus():
    c, _ = synthetic()
    before = copy.deepcopy((c.instances, c.classes, c.index))
    for s in range(5):
        sample_episode(c, 5, 5, 5, make_rng(s))
    assert (c.instances, c.classes, c.index) == before


def test_insufficient_instances_names_class():
    c = Corpus([Instance("a b", ("x",)), Instance("c d", ("y",)), Instance("e", ("y",))])
    with pytest.raises(SamplingError, match="'x'"):
        for s in range(10):
            sample_episode(c, 2, 1, 1, make_rng(s))


def test_too_few_classes():
    c, _ = synthetic(3)
    with pytest.raises(SamplingError):
        sample_episode(c, 5, 1, 1, make_rng(0))


def test_uniform_class_draw():
    c, _ = synthetic(10, 2)
    counts = {cls: 0 for cls in c.classes}
    r = make_rng(123)
    for _ in range(10_000):
        for cls in sample_episode(c, 5, 1, 1, r).classes:
            counts[cls] += 1
    freqs = np.array(list(counts.values())) / 10_000
    assert np.all(np.abs(freqs - 0.5) <= 0.02)


def test_synthetic_reproducible():
    a, ta = make_synthetic_corpus(6, 5, 0.8, 10, 1, make_rng(4))
    b, tb = make_synthetic_corpus(6, 5, 0.8, 10, 1, make_rng(4))
    assert a.instances == b.instances
    assert np.array_equal(ta.matrix, tb.matrix)


def test_similarity_group_cosine():
    c, table = make_synthetic_corpus(8, 5, 0.8, 10, 2, make_rng(5), class_splits=(4, 4))
    vec = {cls: build_label_embedding(cls, table).vector for cls in c.classes}
    groups = {}
    for cls in c.classes:
        groups.setdefault(cls.split("_")[0], []).append(cls)
    paired = [g for g in groups.values() if len(g) == 2]
    assert len(paired) == 4  # 2 per split
    for a, b in paired:
        assert cosine(vec[a], vec[b]).item() >= 0.85
    singles = [g[0] for g in groups.values() if len(g) == 1]
    for a in singles:
        for b in c.classes:
            if a != b:
                assert abs(cosine(vec[a], vec[b]).item()) < 0.5


def test_synthetic_splits_are_class_disjoint():
    c, _ = make_synthetic_corpus(12, 10, 1.0, 5, 1, make_rng(6), class_splits=(6, 2, 4),
                                 multi_label_fraction=0.5)
    parts = [c.subset(s) for s in c.splits]
    seen = set()
    for p, names in zip(parts, c.splits):
        assert set(p.classes) == set(names)
        assert not seen & set(p.classes)
        seen |= set(p.classes)
        # multi-label partners come from the same split, so nothing is truncated
        assert sum(len(i.labels) for i in p.instances) == sum(
            len(i.labels) for i in c.instances if set(i.labels) & set(names))


def test_keywords_recorded():
    c, table = synthetic(4, 3)
    for cls, kws in c.keywords.items():
        for inst in c.instances:
            if inst.labels == (cls,):
                assert set(inst.text.split()) <= set(kws)
                assert all(k in table for k in kws)


def test_noise_fraction():
    c, _ = make_synthetic_corpus(4, 50, 0.8, 20, 0, make_rng(7), noise_fraction=0.5)
    kw = {k for ks in c.keywords.values() for k in ks}
    toks = [t for i in c.instances for t in i.text.split()]
    frac = np.mean([t not in kw for t in toks])
    assert 0.45 <= frac <= 0.55
