"""Few-shot enrollment walkthrough, library-level.

Pretrains tiny weak + frame-embedding models, then runs the few-shot
side on one synthetic episode: curate the K unsegmented shots, expand
the curated segments into a training set (positives by time shift,
negatives by masking/shuffling the positives themselves), train the
margin detector, and stream it over an evaluation clip.

Runs in a few minutes on a laptop:  python3 demos/02_enroll_and_detect.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from seqshot import augment, corpus, curation, detector, dsp, pretrain

TINY = dict(channels=(4, 6, 8, 10, 12), head_hidden=16, embed_dim=8)

work = Path(tempfile.mkdtemp(prefix="seqshot_demo2_"))
print(f"working in {work}")

# -- pretraining (tiny, just enough to give embeddings some structure) -----
cfg = corpus.PretrainConfig(n_classes=6, n_noise_classes=2,
                            clips_per_class=8, clip_duration_s=8.0, seed=5)
records = pretrain.load_manifest(corpus.gen_pretrain_dataset(cfg, work / "d"))
mc = pretrain.ModelConfig(n_classes=6, seed=5, **TINY)
tc = pretrain.TrainConfig(epochs=6, batch_size=8, crop_frames=798,
                          augment=False, seed=5)
weak = pretrain.train_weak(records, 6, tc, model_config=mc)
pseudo = [pretrain.pseudo_label(weak, r.load()) for r in records]
strong = pretrain.train_strong(weak, records, pseudo, tc)
print("pretraining done")

# -- one episode: 3 unsegmented shots, 12 eval clips -----------------------
spec = corpus.EpisodeSpec(family_seed=42, eval_neg_per_seq=1,
                          length_range=(2.0, 3.0))
desc = json.loads(corpus.gen_episode(spec, work / "ep").read_text())
shots = [dsp.load_wav(work / "ep" / e["wav"]) for e in desc["enrollment"]]

# -- curation: find the common, aligned target segment in each shot --------
segments, report = curation.curate(
    shots, lambda w: pretrain.embed_pooled(weak, w))
for seg in segments:
    print(f"shot {seg.shot_id}: target at {seg.onset_s:.2f}-"
          f"{seg.offset_s:.2f} s")

# -- training set from the positives alone ---------------------------------
aug = augment.AugmentConfig(n_time_shift=6, n_delta=0, n_masked=6,
                            n_shuffled=6)
train_set = augment.build_train_set(
    shots, segments,
    lambda w: pretrain.embed_frames_normalized(strong, w),
    delta_model=None, donor_pairs=[], config=aug,
    rng=np.random.default_rng(0))
n_pos = sum(s.label == 1 for s in train_set)
print(f"train set: {len(train_set)} sequences ({n_pos} positive)")

net = detector.train_detector(
    train_set, detector.DetectorTrainConfig(epochs=60, seed=0),
    detector.DetectorConfig(embed_dim=8, proj_dim=8))

# -- stream over one positive and one negative eval clip -------------------
window_s = segments[0].offset_s - segments[0].onset_s
for item in (desc["eval"][0], desc["eval"][-1]):
    w = dsp.load_wav(work / "ep" / item["wav"])
    scores = detector.detect_stream(net, strong, w, window_s)
    t, s = max(scores, key=lambda p: p[1])
    kind = "positive" if item["label"] else "negative"
    print(f"{kind} clip: peak score {s:.3f} at {t:.2f} s")
