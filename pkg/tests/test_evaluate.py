import csv

import numpy as np
import pytest

from seqshot import augment, corpus, detector, evaluate, pretrain
from seqshot.errors import DegenerateInputError, EmptyInputError

TINY = dict(channels=(4, 6, 8, 10, 12), head_hidden=16, embed_dim=8)


# -- average precision ----------------------------------------------------------

def ap_bruteforce(scores, labels):
    """Independent implementation: walk distinct thresholds descending,
    accumulate precision * recall increment."""
    scores = np.asarray(scores, float)
    labels = np.asarray(labels)
    n_pos = labels.sum()
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores.tolist()), reverse=True):
        sel = scores >= thr
        tp = int((labels[sel] == 1).sum())
        precision = tp / int(sel.sum())
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def test_auprc_perfect_ranking():
    assert evaluate.auprc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_auprc_worst_ranking():
    # positive ranked last among n=4: AP = 1/4
    assert evaluate.auprc([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == \
        pytest.approx(0.25)


def test_auprc_all_tied_is_prevalence():
    assert evaluate.auprc([0.5] * 10, [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]) == \
        pytest.approx(0.3)


def test_auprc_matches_bruteforce_random():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(2, 21))
        # coarse score grid forces frequent ties
        scores = rng.integers(0, 5, size=n) / 4.0
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        assert evaluate.auprc(scores, labels) == \
            pytest.approx(ap_bruteforce(scores, labels), abs=1e-12)


def test_auprc_errors():
    with pytest.raises(DegenerateInputError):
        evaluate.auprc([0.4, 0.6], [1, 1])
    with pytest.raises(EmptyInputError):
        evaluate.auprc([], [])


# -- auc / d-prime -----------------------------------------------------------------

def test_roc_auc_values():
    assert evaluate.roc_auc([0.9, 0.8, 0.2], [1, 1, 0]) == 1.0
    assert evaluate.roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    # one inversion among 2x2: AUC = 3/4
    assert evaluate.roc_auc([0.9, 0.3, 0.4, 0.1], [1, 1, 0, 0]) == \
        pytest.approx(0.75)


def test_dprime_reference_value():
    # AUC 0.75 -> d' = sqrt(2) * 0.6744897502 (standard normal quantile)
    scores = np.array([[0.9], [0.3], [0.4], [0.1]])
    labels = np.array([[1], [1], [0], [0]])
    _, dprime = evaluate.map_and_dprime(scores, labels)
    assert dprime == pytest.approx(np.sqrt(2) * 0.6744897502, abs=1e-6)


def test_map_skips_degenerate_class(caplog):
    scores = np.array([[0.9, 0.1], [0.2, 0.3], [0.8, 0.5]])
    labels = np.array([[1, 1], [0, 1], [1, 1]])
    with caplog.at_level("WARNING"):
        map_, _ = evaluate.map_and_dprime(scores, labels)
    assert map_ == 1.0                       # class 0 perfect, class 1 skipped
    assert any("single label" in r.message for r in caplog.records)
    ones = np.ones((3, 2))
    with pytest.raises(DegenerateInputError):
        evaluate.map_and_dprime(ones * 0.5, ones)


def test_map_perfect_separation_dprime_finite():
    scores = np.array([[1.0], [0.9], [0.1], [0.0]])
    labels = np.array([[1], [1], [0], [0]])
    map_, dprime = evaluate.map_and_dprime(scores, labels)
    assert map_ == 1.0
    assert np.isfinite(dprime) and dprime > 3.0


# -- difficulty index --------------------------------------------------------------

def test_difficulty_extremes_and_scale_invariance():
    c = np.array([1.0, 0.0, 0.0])
    assert evaluate.difficulty_index(c, [c, 2 * c]) == pytest.approx(1.0)
    assert evaluate.difficulty_index(c, [np.array([0.0, 1.0, 0.0])]) == \
        pytest.approx(0.0)
    negs = [np.array([0.6, 0.8, 0.0])]
    assert evaluate.difficulty_index(c, negs) == \
        pytest.approx(evaluate.difficulty_index(5 * c, [10 * negs[0]]))
    with pytest.raises(EmptyInputError):
        evaluate.difficulty_index(c, [])


# -- reporting ---------------------------------------------------------------------

def fake_result(duration, psl, wl):
    return evaluate.EpisodeResult(psl_auprc=psl, wl_auprc=wl,
                                  psl_per_rep=[psl], difficulty=0.5,
                                  target_duration_s=duration, n_pos=3,
                                  n_neg=9)


def test_report_csv(tmp_path):
    results = [fake_result(2.0, 0.8, 0.5), fake_result(4.0, 0.9, 0.6),
               fake_result(6.0, 0.7, 0.7)]
    per_ep, summary = evaluate.report(results, tmp_path / "out.csv")
    rows = list(csv.DictReader(open(per_ep)))
    assert len(rows) == 3
    assert float(rows[0]["rel_improvement"]) == pytest.approx(0.6, abs=1e-3)
    srows = list(csv.DictReader(open(summary)))
    assert [r["duration_bin"] for r in srows] == \
        ["[0, 3)", "[3, 5)", "[5, inf)"]
    assert all(r["n_episodes"] == "1" for r in srows)


# -- episode protocol ---------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_models():
    rng = np.random.default_rng(0)
    weak = pretrain.WeakModel(pretrain.ModelConfig(n_classes=4, seed=0,
                                                   **TINY))
    strong = pretrain.StrongModel(pretrain.ModelConfig(n_classes=4, seed=0,
                                                       **TINY))
    # embedding frames are 64-d for TINY: 8 channels x 8 freq bins at
    # the default backbone tap
    delta = augment.DeltaEncoder(64, augment.DeltaConfig(z_dim=4, hidden=16))
    donors = [(augment.EmbeddingSequence(rng.standard_normal((10, 64)), 1,
                                         "curated"),
               augment.EmbeddingSequence(rng.standard_normal((10, 64)), 1,
                                         "curated"))]
    return evaluate.PretrainedModels(weak=weak, strong=strong, delta=delta,
                                     donor_pairs=donors)


@pytest.fixture(scope="module")
def small_episode(tmp_path_factory):
    spec = corpus.EpisodeSpec(family_seed=13, eval_neg_per_seq=1,
                              length_range=(1.5, 2.5))
    path = corpus.gen_episode(spec, tmp_path_factory.mktemp("ep"))
    return evaluate.Episode(path)


def test_run_episode_structure_and_audit(small_episode, tiny_models):
    cfg = detector.DetectorTrainConfig(epochs=4, seed=0)
    aug = augment.AugmentConfig(n_time_shift=2, n_delta=2, n_masked=2,
                                n_shuffled=2)
    result = evaluate.run_episode(small_episode, tiny_models, reps=2, seed=1,
                                  augment_config=aug, train_config=cfg)
    assert result.n_pos == 3 and result.n_neg == 9
    assert 0.0 <= result.psl_auprc <= 1.0
    assert 0.0 <= result.wl_auprc <= 1.0
    assert len(result.psl_per_rep) == 2
    assert -1.0 <= result.difficulty <= 1.0
    assert result.target_duration_s > 0
    # evaluation audio is never read while the detector is being built
    assert not any(phase == "train" and kind == "eval"
                   for phase, kind, _ in result.audit)
    # every eval clip is read exactly once (embeddings are cached)
    eval_reads = [i for phase, kind, i in result.audit if kind == "eval"]
    assert sorted(eval_reads) == list(range(12))
