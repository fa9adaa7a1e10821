"""Command-line entry point.

Every subcommand prints a one-object JSON summary on stdout and logs
progress to stderr.  Exit codes: 0 success, 1 runtime failure (bad
files, degenerate data), 2 usage or configuration errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import augment, config, corpus, curation, detector, evaluate, pretrain
from .errors import ConfigError, SeqshotError

log = logging.getLogger("seqshot")


def _emit(summary):
    json.dump(summary, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


def _train_config(cfg):
    t = cfg["train"]
    return pretrain.TrainConfig(
        epochs=t["epochs"], batch_size=t["batch_size"], seed=cfg["seed"],
        peak_lr=t["peak_lr"], final_lr=t["final_lr"],
        warmup_frac=t["warmup_frac"], weight_decay=t["weight_decay"],
        crop_frames=t["crop_frames"], augment=t["augment"])


def _model_config(cfg, n_classes, channels=None):
    m = cfg["model"]
    return pretrain.ModelConfig(
        n_classes=n_classes, channels=tuple(channels or m["channels"]),
        head_hidden=m["head_hidden"], embed_dim=m["embed_dim"],
        seed=cfg["seed"])


def _detector_train_config(cfg):
    d = cfg["detector"]
    return detector.DetectorTrainConfig(
        epochs=d["epochs"], lr=d["lr"], weight_decay=d["weight_decay"],
        seed=cfg["seed"],
        margin=detector.MarginConfig(gamma=d["gamma"],
                                     margin_weight=d["margin_weight"],
                                     bce_weight=d["bce_weight"]))


def _augment_config(cfg, have_delta):
    a = cfg["augment"]
    return augment.AugmentConfig(
        n_time_shift=a["n_time_shift"],
        n_delta=a["n_delta"] if have_delta else 0,
        n_masked=a["n_masked"], n_shuffled=a["n_shuffled"])


def _load_donor_pairs(path):
    seqs = augment.load_train_set(path)
    if len(seqs) < 2:
        raise SeqshotError("donor set needs at least one (clean, degraded) "
                           "pair")
    return [(seqs[i], seqs[i + 1]) for i in range(0, len(seqs) - 1, 2)]


def _n_classes(cfg):
    # total classes; the last n_noise_classes of them are noise bursts
    return cfg["corpus"]["n_classes"]


# -- subcommands ----------------------------------------------------------------

def cmd_synth_corpus(args, cfg):
    c = cfg["corpus"]
    spec = corpus.PretrainConfig(
        n_classes=c["n_classes"], n_noise_classes=c["n_noise_classes"],
        clips_per_class=c["clips_per_class"],
        clip_duration_s=c["clip_duration_s"], seed=cfg["seed"])
    manifest = corpus.gen_pretrain_dataset(spec, args.out)
    n_clips = sum(1 for line in manifest.read_text().splitlines()
                  if line.strip())
    _emit({"manifest": str(manifest), "clips": n_clips,
           "classes": _n_classes(cfg)})


def cmd_pretrain(args, cfg):
    records = pretrain.load_manifest(args.data)
    model = pretrain.train_weak(records, _n_classes(cfg), _train_config(cfg),
                                _model_config(cfg, _n_classes(cfg)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "teacher.ckpt"
    model.save(path)
    _emit({"checkpoint": str(path), "clips": len(records),
           "final_loss": model.loss_curve[-1] if model.loss_curve else None})


def cmd_distill(args, cfg):
    records = pretrain.load_manifest(args.data)
    teacher = pretrain.WeakModel.load(args.teacher)
    student_cfg = _model_config(cfg, teacher.config.n_classes,
                                channels=cfg["distill"]["channels"])
    model = pretrain.distill(teacher, student_cfg, records,
                             _train_config(cfg),
                             temperature=cfg["distill"]["temperature"],
                             kd_weight=cfg["distill"]["kd_weight"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "student.ckpt"
    model.save(path)
    _emit({"checkpoint": str(path), "clips": len(records),
           "final_loss": model.loss_curve[-1] if model.loss_curve else None})


def cmd_pseudolabel(args, cfg):
    records = pretrain.load_manifest(args.data)
    model = pretrain.WeakModel.load(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries, total, positive = [], 0, 0
    for i, r in enumerate(records):
        psl = pretrain.pseudo_label(model, r.load())
        name = f"psl_{i:05d}.sqpl"
        pretrain.write_pseudo_labels(out / name, psl)
        entries.append({"wav": str(r.wav_path), "pseudo": name})
        total += psl.labels.size
        positive += int(psl.labels.sum())
    with open(out / "pseudo_manifest.jsonl", "w") as f:
        for e in entries:
            f.write(json.dumps(e, sort_keys=True) + "\n")
    _emit({"out": str(out), "clips": len(records),
           "positive_rate": positive / total if total else 0.0})


def cmd_train_strong(args, cfg):
    records = pretrain.load_manifest(args.data)
    student = pretrain.WeakModel.load(args.student)
    pseudo_dir = Path(args.pseudo)
    entries = [json.loads(line) for line in
               (pseudo_dir / "pseudo_manifest.jsonl").read_text().splitlines()
               if line.strip()]
    pseudo = [pretrain.read_pseudo_labels(pseudo_dir / e["pseudo"])
              for e in entries]
    model = pretrain.train_strong(student, records, pseudo,
                                  _train_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "strong.ckpt"
    model.save(path)
    _emit({"checkpoint": str(path), "clips": len(records),
           "final_loss": model.loss_curve[-1] if model.loss_curve else None})


def cmd_enroll(args, cfg):
    if not args.shots:
        raise ConfigError("enroll needs at least one shot")
    weak = pretrain.WeakModel.load(args.weak)
    strong = pretrain.StrongModel.load(args.strong)
    delta = augment.DeltaEncoder.load(args.delta) if args.delta else None
    donors = _load_donor_pairs(args.donors) if args.donors else []
    if delta is not None and not donors:
        raise ConfigError("--delta requires --donors")
    from . import dsp
    shots = [dsp.load_wav(p) for p in args.shots]
    aligned, curation_report = curation.curate(
        shots, lambda w: pretrain.embed_pooled(weak, w))
    rng = np.random.default_rng(cfg["seed"])
    train_set = augment.build_train_set(
        shots, aligned,
        lambda w: pretrain.embed_frames_normalized(strong, w),
        delta, donors, _augment_config(cfg, delta is not None), rng)
    net = detector.train_detector(train_set, _detector_train_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net.save(out / "detector.ckpt")
    window_s = aligned[0].duration_s
    enrollment = {
        "window_s": window_s,
        "segments": [[s.shot_id, s.onset_s, s.offset_s] for s in aligned],
        "curation": curation_report,
        "train_items": len(train_set),
    }
    (out / "enrollment.json").write_text(
        json.dumps(enrollment, indent=1, sort_keys=True) + "\n")
    _emit({"detector": str(out / "detector.ckpt"),
           "enrollment": str(out / "enrollment.json"),
           "window_s": window_s, "train_items": len(train_set)})


def cmd_detect(args, cfg):
    from . import dsp
    net = detector.DetectorNet.load(args.detector)
    strong = pretrain.StrongModel.load(args.strong)
    enrollment = json.loads(Path(args.enrollment).read_text())
    w = dsp.load_wav(args.recording)
    scored = detector.detect_stream(net, strong, w, enrollment["window_s"])
    events = [[t, s] for t, s in scored if s > args.threshold]
    _emit({"recording": str(args.recording),
           "window_s": enrollment["window_s"],
           "n_windows": len(scored),
           "max_score": max(s for _, s in scored),
           "events": events})


def cmd_evaluate(args, cfg):
    weak = pretrain.WeakModel.load(args.weak)
    strong = pretrain.StrongModel.load(args.strong)
    delta = augment.DeltaEncoder.load(args.delta) if args.delta else None
    donors = _load_donor_pairs(args.donors) if args.donors else []
    if delta is None:
        # delta augmentation needs both the model and donor pairs
        delta = augment.DeltaEncoder(strong.config.embed_dim)
        donors = []
    models = evaluate.PretrainedModels(weak=weak, strong=strong, delta=delta,
                                       donor_pairs=donors)
    aug_cfg = _augment_config(cfg, bool(donors))
    results = []
    for ep_dir in args.episodes:
        descriptor = Path(ep_dir) / "episode.json"
        episode = evaluate.Episode(descriptor)
        log.info("episode %s: %d eval clips", ep_dir, len(episode.eval_items))
        results.append(evaluate.run_episode(
            episode, models, reps=cfg["evaluate"]["reps"], seed=cfg["seed"],
            augment_config=aug_cfg,
            train_config=_detector_train_config(cfg)))
    out = Path(args.out)
    per_ep, summary = evaluate.report(results, out / "episodes.csv")
    _emit({
        "report": str(per_ep),
        "summary": str(summary),
        "episodes": [
            {"psl_auprc": r.psl_auprc, "wl_auprc": r.wl_auprc,
             "difficulty": r.difficulty,
             "target_duration_s": r.target_duration_s}
            for r in results
        ],
        "median_psl_auprc": float(np.median([r.psl_auprc for r in results])),
        "median_wl_auprc": float(np.median([r.wl_auprc for r in results])),
    })


# -- argument parsing -------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqshot",
        description="Few-shot acoustic sequence detection toolkit.")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="dotted config override, e.g. train.epochs=5")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("pretrain", help="train the weak-label teacher")
    p.add_argument("--data", required=True, help="dataset manifest (JSONL)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("distill", help="distill a compact student")
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("pseudolabel", help="window-level pseudo labels")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("train-strong", help="train the frame-level model")
    p.add_argument("--data", required=True)
    p.add_argument("--student", required=True)
    p.add_argument("--pseudo", required=True,
                   help="directory from the pseudolabel step")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_strong)

    p = sub.add_parser("enroll", help="build a detector from a few shots")
    p.add_argument("--shots", nargs="*", default=[], help="enrollment wavs")
    p.add_argument("--weak", required=True)
    p.add_argument("--strong", required=True)
    p.add_argument("--delta")
    p.add_argument("--donors", help="embedding-sequence pair directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("detect", help="scan a recording")
    p.add_argument("--recording", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--strong", required=True)
    p.add_argument("--enrollment", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="run the episode protocol")
    p.add_argument("--episodes", nargs="+", required=True,
                   help="episode directories")
    p.add_argument("--weak", required=True)
    p.add_argument("--strong", required=True)
    p.add_argument("--delta")
    p.add_argument("--donors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config.load_config(args.config, args.set, seed=args.seed)
        if getattr(args, "out", None):
            config.echo_config(cfg, args.out)
        args.func(args, cfg)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    except (SeqshotError, OSError) as e:
        log.error("%s", e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
