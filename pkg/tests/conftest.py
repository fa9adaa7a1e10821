"""Session-scoped fixtures for the system-level acceptance tests.

These train real (small) models and take several minutes; the unit-test
modules do not use them. Wall-clock time for each stage is recorded so
the timed acceptance criteria measure what was actually run.
"""

import json
import time

import numpy as np
import pytest

from seqshot import augment, corpus, dsp, evaluate, pretrain

# Acceptance-scale settings: small enough for the stated runtime budgets
# on a CPU, large enough that every measured property holds with margin.
ACCEPT_MODEL = dict(channels=(8, 12, 16, 24, 32), head_hidden=64,
                    embed_dim=32)
# The weak model trains on crops matching the 0.5 s pseudo-label window
# so its sigmoid outputs are calibrated at window scale; the frame model
# trains on full clips so every 320 ms output frame carries a target.
ACCEPT_TRAIN_WEAK = dict(epochs=100, batch_size=64, crop_frames=48,
                         augment=False, seed=0)
ACCEPT_TRAIN_STRONG = dict(epochs=10, batch_size=32, crop_frames=998,
                           augment=False, seed=0)
N_CLASSES = 12


class Timed:
    """A value plus the seconds it took to build."""

    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


@pytest.fixture(scope="session")
def accept_corpus(tmp_path_factory):
    """~500-clip, 12-class pretraining set with exact strong events."""
    t0 = time.time()
    cfg = corpus.PretrainConfig(seed=0)
    manifest = corpus.gen_pretrain_dataset(
        cfg, tmp_path_factory.mktemp("accept_data"))
    records = pretrain.load_manifest(manifest)
    return Timed(records, time.time() - t0)


@pytest.fixture(scope="session")
def accept_weak(accept_corpus):
    """Weak-label classifier trained on clip-level labels."""
    t0 = time.time()
    mc = pretrain.ModelConfig(n_classes=N_CLASSES, seed=0, **ACCEPT_MODEL)
    tc = pretrain.TrainConfig(**ACCEPT_TRAIN_WEAK)
    model = pretrain.train_weak(accept_corpus.value, N_CLASSES, tc,
                                model_config=mc)
    return Timed(model, time.time() - t0)


@pytest.fixture(scope="session")
def accept_pseudo(accept_weak, accept_corpus):
    """Window-level pseudo labels for every clip."""
    t0 = time.time()
    pseudo = [pretrain.pseudo_label(accept_weak.value, r.load())
              for r in accept_corpus.value]
    return Timed(pseudo, time.time() - t0)


@pytest.fixture(scope="session")
def accept_strong(accept_weak, accept_pseudo, accept_corpus):
    """Frame-embedding model trained on the pseudo labels."""
    t0 = time.time()
    tc = pretrain.TrainConfig(**ACCEPT_TRAIN_STRONG)
    model = pretrain.train_strong(accept_weak.value, accept_corpus.value,
                                  accept_pseudo.value, tc)
    return Timed(model, time.time() - t0)


def _render_donor_pair(motif, rng, strong):
    """(clean near-field, degraded far-field) embedding sequences of the
    same event — the deformation-transfer training signal."""
    duration = motif.duration_s + 1.0
    insert = 0.5
    seqs = []
    for field in ("near", "far"):
        sc = corpus.SceneSpec(duration_s=duration, background="pink",
                              snr_db=18.0, insert_time_s=insert,
                              field=field, rt60_s=0.5)
        w, _, _ = corpus.render_scene(motif, sc, rng)
        frames = pretrain.embed_frames_normalized(strong, w)
        seqs.append(augment.EmbeddingSequence(frames, 1, "curated"))
    return tuple(seqs)


@pytest.fixture(scope="session")
def accept_delta(accept_strong):
    """Deformation encoder trained on near/far pairs of held-out motifs."""
    t0 = time.time()
    rng = np.random.default_rng(99)
    pairs = []
    for i in range(12):
        fam = corpus.gen_motif_family(family_seed=50_000 + i,
                                      n_sequences=2,
                                      length_range=(2.0, 5.0))
        for motif in fam:
            pairs.append(_render_donor_pair(motif, rng, accept_strong.value))
    cfg = augment.DeltaConfig(z_dim=8, hidden=64, epochs=150, seed=0)
    model = augment.train_delta(pairs, cfg)
    return Timed((model, pairs), time.time() - t0)


@pytest.fixture(scope="session")
def accept_models(accept_weak, accept_strong, accept_delta):
    delta, donor_pairs = accept_delta.value
    return evaluate.PretrainedModels(weak=accept_weak.value,
                                     strong=accept_strong.value,
                                     delta=delta,
                                     donor_pairs=donor_pairs)


# Target-duration windows spanning 1-8 s: four episodes per duration bin
# (< 3 s, 3-5 s, >= 5 s).
EPISODE_LENGTHS = [
    (1.2, 1.6), (1.8, 2.2), (2.2, 2.6), (2.5, 2.9),
    (3.2, 3.6), (3.6, 4.0), (4.0, 4.4), (4.4, 4.8),
    (5.2, 5.8), (6.0, 6.6), (6.6, 7.2), (7.2, 7.8),
]


@pytest.fixture(scope="session")
def accept_episodes(tmp_path_factory, accept_models):
    """Twelve audited episode runs spanning the duration bins."""
    t0 = time.time()
    results = []
    for i, length_range in enumerate(EPISODE_LENGTHS):
        spec = corpus.EpisodeSpec(family_seed=7000 + i,
                                  eval_neg_per_seq=4,
                                  length_range=length_range)
        path = corpus.gen_episode(spec, tmp_path_factory.mktemp(f"ep{i}"))
        episode = evaluate.Episode(path)
        results.append(evaluate.run_episode(episode, accept_models,
                                            reps=3, seed=i))
    return Timed(results, time.time() - t0)
