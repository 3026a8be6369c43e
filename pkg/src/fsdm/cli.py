"""Command-line surface tying the modules into reproducible experiments.

Commands: synth, train, sample, eval, infogain, preprocess, oracle-check,
degrade.  Every command reads a JSON run configuration (schema-validated,
unknown keys rejected), writes machine-readable JSON/CSV under --out, and
prints a short human summary.  Outputs carry no timestamps, so a fixed
(config, seed) pair reproduces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import checks, evalkit, experiments, neural
from .bundle import Bundle, SignalEntry, dump_json, read_bundle, write_bundle
from .dsp import KINDS, RawSignal, preprocess, write_signal_f32
from .hypno import SleepStage, argmax_stages, read_hypnogram, write_hypnogram
from .infogain import information_gain, write_infogain_csv
from .oracle import PRIOR, WorldModel, exact_denoiser, world_from_dict
from .sampler import SamplerConfig, infer
from .sched import ScheduleParams
from .scorekit import Features, SensorBank
from .synth import SynthConfig, WaveformSpec, gen_recording, split_of_index

_NUMBER = {"type": "number"}
_INT = {"type": "integer"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma_min": _NUMBER, "sigma_max": _NUMBER,
                "rho": _NUMBER, "M": _INT,
            },
        },
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": _INT,
                "lambda": {"oneOf": [_NUMBER, {"const": "auto"}]},
                "base_seed": _INT,
                "record_trajectory": {"type": "boolean"},
                "denoisers": {"enum": ["exact", "trained"]},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_augment": _NUMBER, "p_zero": _NUMBER,
                "sigma_log_mean": _NUMBER, "sigma_log_sd": _NUMBER,
                "steps": _INT, "learning_rate": _NUMBER,
                "seed": _INT, "window_radius": _INT, "channels": _INT,
                "sigma_data": _NUMBER,
            },
        },
        "world": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"type": "object"},
                "n_recordings": _INT,
                "waveform": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "stage_rates": {
                                "type": "object",
                                "additionalProperties": _NUMBER,
                            },
                            "base_amplitude": _NUMBER,
                            "noise_sd": _NUMBER,
                            "fs": _NUMBER,
                            "jitter_sd": _NUMBER,
                            "pulse_width_s": _NUMBER,
                            "kind_name": {"type": "string"},
                        },
                    },
                },
            },
        },
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bundles_dir": {"type": "string"},
                "bundle": {"type": "string"},
                "models_dir": {"type": "string"},
                "predictions_dir": {"type": "string"},
                "pad_epochs": _INT,
            },
        },
    },
}


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def _schedule(cfg: dict) -> ScheduleParams:
    section = cfg.get("schedule", {})
    return ScheduleParams(
        sigma_min=section.get("sigma_min", 0.0001),
        sigma_max=section.get("sigma_max", 40.0),
        rho=section.get("rho", 7.0),
        M=section.get("M", 32),
    )


def _sampler_config(cfg: dict, args) -> SamplerConfig:
    section = cfg.get("sampler", {})
    lam = section.get("lambda", "auto")
    if getattr(args, "lambda_", None) is not None:
        lam = args.lambda_
    if isinstance(lam, str):
        if lam != "auto":
            raise ValueError(f"lambda must be a number or 'auto', got {lam!r}")
        lam = None
    n_samples = section.get("n_samples", 64)
    if getattr(args, "n_samples", None) is not None:
        n_samples = args.n_samples
    base_seed = section.get("base_seed", 0)
    if getattr(args, "seed", None) is not None:
        base_seed = args.seed
    return SamplerConfig(
        schedule=_schedule(cfg),
        n_samples=n_samples,
        lam=lam,
        base_seed=base_seed,
        record_trajectory=section.get("record_trajectory", False),
    )


def _train_config(cfg: dict, args) -> neural.TrainConfig:
    section = dict(cfg.get("train", {}))
    if getattr(args, "seed", None) is not None:
        section["seed"] = args.seed
    return neural.TrainConfig(**section)


def _world(cfg: dict) -> WorldModel:
    section = cfg.get("world", {})
    if "model" not in section:
        raise ValueError("config world.model is required for this command")
    return world_from_dict(section["model"])


def _waveform_specs(cfg: dict) -> dict[str, WaveformSpec]:
    out = {}
    for name, spec in cfg.get("world", {}).get("waveform", {}).items():
        rates = {SleepStage[k]: float(v) for k, v in spec["stage_rates"].items()}
        out[name] = WaveformSpec(
            stage_rates=rates,
            base_amplitude=spec.get("base_amplitude", 1.0),
            noise_sd=spec.get("noise_sd", 0.01),
            fs=spec.get("fs", 128.0),
            jitter_sd=spec.get("jitter_sd", 0.01),
            pulse_width_s=spec.get("pulse_width_s", 0.08),
            kind_name=spec.get("kind_name", "finger_ppg"),
        )
    return out


def _bank_and_obs(cfg: dict, args, bundle: Bundle) -> tuple[SensorBank, list]:
    """Build the denoiser bank (exact or trained) and the observation list."""
    mode = cfg.get("sampler", {}).get("denoisers", "exact")
    wanted = getattr(args, "sensor", None) or sorted(bundle.features)
    missing = [s for s in wanted if s not in bundle.features]
    if missing:
        raise KeyError(f"bundle has no features for sensors {missing}")
    obs = [(name, Features(bundle.features[name])) for name in wanted]
    if mode == "exact":
        world = _world(cfg)
        bank = SensorBank(
            exact_denoiser(world, PRIOR),
            tuple((name, exact_denoiser(world, name)) for name in wanted),
        )
    else:
        models_dir = Path(cfg.get("paths", {}).get("models_dir", "models"))
        prior = neural.load_model(models_dir / "prior.json")
        bank = SensorBank(
            prior,
            tuple((name, neural.load_model(models_dir / f"{name}.json")) for name in wanted),
        )
    return bank, obs


def _write_samples_csv(path, samples) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_index", "epoch_index", "stage"])
        for i, y in enumerate(samples):
            h = argmax_stages(y)
            for e, label in enumerate(h.to_labels()):
                writer.writerow([i, e, label])


def _write_trajectories_csv(path, results) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_index", "step", "sigma", "epoch_index",
                         "w", "n1", "n2", "n3", "r"])
        for i, result in enumerate(results):
            for step in result.trajectory or ():
                for e in range(step.y.shape[1]):
                    writer.writerow(
                        [i, step.m, repr(float(step.sigma)), e]
                        + [repr(float(v)) for v in step.y[:, e]]
                    )


def emit_plot_data(rows: list[dict], path) -> None:
    """One CSV row per (sensor-set, recording): gain, accuracy, kappa."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sensor_set", "recording", "mean_info_gain", "accuracy", "kappa"])
        for row in rows:
            writer.writerow([
                row["sensor_set"], row["recording"],
                repr(float(row["mean_info_gain"])),
                repr(float(row["accuracy"])),
                repr(float(row["kappa"])),
            ])


# -- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    world = _world(cfg)
    specs = _waveform_specs(cfg)
    n = cfg.get("world", {}).get("n_recordings", 10)
    seed = args.seed if args.seed is not None else cfg.get("sampler", {}).get("base_seed", 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth_cfg = SynthConfig(world=world, n_recordings=n, waveform=specs, seed=seed)
    split: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    for i in range(n):
        rec = gen_recording(synth_cfg, i)
        signals = {}
        for name, wave in rec.waveforms.items():
            spec = specs[name]
            signals[name] = (wave, SignalEntry(
                name=name, kind=spec.kind_name, fs=spec.fs, file=f"signals/{name}.f32",
            ))
        write_bundle(out / rec.recording_id, Bundle(
            recording_id=rec.recording_id,
            n_epochs=world.n_epochs,
            valid_epochs=world.n_epochs,
            hypnogram=rec.hypnogram,
            features={k: v[None, :] for k, v in rec.features.items()},
            signals=signals,
        ))
        split[split_of_index(i)].append(rec.recording_id)
    dump_json(out / "split.json", split)
    print(f"synth: wrote {n} recording bundles to {out}")
    return 0


def _load_dataset(bundles_dir: Path, ids: list[str]):
    dataset = []
    for rec_id in ids:
        bundle = read_bundle(bundles_dir / rec_id)
        dataset.append((bundle.hypnogram, bundle.features))
    return dataset


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    train_cfg = _train_config(cfg, args)
    bundles_dir = Path(cfg.get("paths", {}).get("bundles_dir", "bundles"))
    split_file = bundles_dir / "split.json"
    if split_file.exists():
        with open(split_file, "r", encoding="utf-8") as f:
            ids = json.load(f)["train"]
    else:
        ids = sorted(p.name for p in bundles_dir.iterdir() if p.is_dir())
    dataset = _load_dataset(bundles_dir, ids)
    sensors = args.sensor or sorted(dataset[0][1])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = neural.train(dataset, neural.PRIOR, train_cfg)
    neural.save_model(out / "prior.json", net)
    print(f"train: prior on {len(dataset)} recordings -> {out / 'prior.json'}")
    for name in sensors:
        net = neural.train(dataset, name, train_cfg)
        neural.save_model(out / f"{name}.json", net)
        print(f"train: {name} -> {out / (name + '.json')}")
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    bundle = read_bundle(Path(cfg["paths"]["bundle"]))
    bank, obs = _bank_and_obs(cfg, args, bundle)
    sampler_cfg = _sampler_config(cfg, args)
    result = infer(bank, obs, sampler_cfg, bundle.n_epochs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_hypnogram(out / "hypnogram.txt", result.hypnogram)
    _write_samples_csv(out / "samples.csv", result.samples)
    dump_json(out / "stats.json", {k: v for k, v in sorted(result.stats.items())})
    if sampler_cfg.record_trajectory:
        _write_trajectories_csv(out / "trajectories.csv", result.results)
    acc = evalkit.accuracy(result.hypnogram, bundle.hypnogram)
    print(f"sample: {sampler_cfg.n_samples} samples, "
          f"5-class accuracy vs bundle hypnogram {acc:.3f}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    bundles_dir = Path(cfg["paths"]["bundles_dir"])
    pred_dir = Path(cfg["paths"]["predictions_dir"])
    rows = []
    stat_pairs: dict[str, list[tuple[float, float]]] = {}
    for rec_dir in sorted(p for p in bundles_dir.iterdir() if p.is_dir()):
        pred_file = pred_dir / rec_dir.name / "hypnogram.txt"
        if not pred_file.exists():
            continue
        bundle = read_bundle(rec_dir)
        pred = read_hypnogram(pred_file)
        mask = np.zeros(bundle.n_epochs, dtype=bool)
        mask[: bundle.valid_epochs] = True
        row = {"recording": bundle.recording_id}
        for scheme in evalkit.MergeScheme:
            row[f"accuracy_{scheme.value}"] = evalkit.accuracy(
                pred, bundle.hypnogram, scheme, mask)
            row[f"kappa_{scheme.value}"] = evalkit.cohens_kappa(
                pred, bundle.hypnogram, scheme, mask)
        f1 = evalkit.f1_per_class(pred, bundle.hypnogram, mask)
        for stage, value in zip(("w", "n1", "n2", "n3", "r"), f1):
            row[f"f1_{stage}"] = float(value)
        est = evalkit.overnight_stats(pred, bundle.valid_epochs)
        ref = evalkit.overnight_stats(bundle.hypnogram, bundle.valid_epochs)
        for stat, val in evalkit.report_to_dict(est).items():
            row[f"est_{stat}"] = val
            ref_val = getattr(ref, stat)
            row[f"ref_{stat}"] = ref_val
            if val is not None and ref_val is not None:
                stat_pairs.setdefault(stat, []).append((val, ref_val))
        rows.append(row)
    if not rows:
        raise ValueError("no predictions found to evaluate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = list(rows[0].keys())
    with open(out / "rows.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                row[k] if isinstance(row[k], str)
                else ("" if row[k] is None else repr(float(row[k])))
                for k in header
            ])
    report = {
        "n_recordings": len(rows),
        "mean_accuracy_five": float(np.mean([r["accuracy_five"] for r in rows])),
        "mean_kappa_five": float(np.mean([r["kappa_five"] for r in rows])),
        "bland_altman": {
            stat: evalkit.bland_altman(pairs)
            for stat, pairs in sorted(stat_pairs.items()) if len(pairs) >= 2
        },
    }
    dump_json(out / "report.json", report)
    print(f"eval: {len(rows)} recordings, mean 5-class accuracy "
          f"{report['mean_accuracy_five']:.3f}")
    return 0


def cmd_infogain(args) -> int:
    cfg = load_config(args.config)
    if not args.sensor:
        raise ValueError("--sensor is required for infogain")
    bundle = read_bundle(Path(cfg["paths"]["bundle"]))
    bank, obs = _bank_and_obs(cfg, args, bundle)
    sampler_cfg = _sampler_config(cfg, args)
    if not sampler_cfg.record_trajectory:
        sampler_cfg = SamplerConfig(
            schedule=sampler_cfg.schedule, n_samples=sampler_cfg.n_samples,
            lam=sampler_cfg.lam, base_seed=sampler_cfg.base_seed,
            record_trajectory=True,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for sensor in args.sensor:
        gain = information_gain(bank, obs, sensor, sampler_cfg, bundle.n_epochs)
        write_infogain_csv(out / f"infogain_{sensor}.csv", gain)
        print(f"infogain: {sensor} mean {float(gain.values.mean()):.4f} "
              f"over {gain.values.size} epochs")
    return 0


def cmd_preprocess(args) -> int:
    cfg = load_config(args.config)
    bundle = read_bundle(Path(cfg["paths"]["bundle"]))
    pad_epochs = cfg.get("paths", {}).get("pad_epochs", 1792)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, (samples, entry) in sorted(bundle.signals.items()):
        if entry.kind not in KINDS:
            raise KeyError(f"unknown signal kind {entry.kind!r}")
        raw = RawSignal(samples=samples, fs=entry.fs, kind=KINDS[entry.kind])
        processed = preprocess(raw, target_epochs=pad_epochs)
        write_signal_f32(out / f"{name}_proc.f32", processed.samples)
        dump_json(out / f"{name}_proc.json",
                  {"fs": 128.0, "kind": entry.kind, "unit": entry.unit})
        info = {"valid_epochs": processed.valid_epochs,
                "n_missing": int(processed.missing_indices.size)}
        if processed.rate is not None:
            write_signal_f32(out / f"{name}_rate.f32", processed.rate)
            info["rate_file"] = f"{name}_rate.f32"
        summary[name] = info
    dump_json(out / "preprocess.json", summary)
    print(f"preprocess: {len(summary)} signals -> {out}")
    return 0


def cmd_oracle_check(args) -> int:
    names = list(checks.SUITES) if args.suite in (None, "all") else [args.suite]
    results = checks.run_suites(names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "report.json", [
        {"check": r.name, "tolerance": r.tolerance,
         "measured": float(r.measured), "passed": bool(r.passed)}
        for r in results
    ])
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        bound = "measured only" if r.tolerance is None else f"tol {r.tolerance:g}"
        print(f"{status} {r.name}: {r.measured:.3e} ({bound})")
    if failed:
        print(f"oracle-check: {len(failed)}/{len(results)} checks failed",
              file=sys.stderr)
        return 1
    print(f"oracle-check: all {len(results)} checks passed")
    return 0


def cmd_degrade(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("sampler", {}).get("base_seed", 0)
    n_samples = args.n_samples or cfg.get("sampler", {}).get("n_samples", 16)
    n_recordings = cfg.get("world", {}).get("n_recordings", 12)
    rows, summaries = experiments.degradation_sweep(
        n_recordings=n_recordings, n_samples=n_samples, seed=seed,
        schedule=_schedule(cfg),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mode", "level", "mean_info_gain", "accuracy", "kappa"])
        for s in summaries:
            writer.writerow([s.mode, repr(s.level), repr(s.mean_info_gain),
                             repr(s.accuracy), repr(s.kappa)])
    emit_plot_data([
        {"sensor_set": f"{r.mode}:{r.level:g}", "recording": r.recording,
         "mean_info_gain": r.mean_info_gain, "accuracy": r.accuracy,
         "kappa": r.kappa}
        for r in rows
    ], out / "plot_data.csv")
    for s in summaries:
        print(f"degrade {s.mode}:{s.level:g}: gain {s.mean_info_gain:.4f} "
              f"accuracy {s.accuracy:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsdm",
        description="Factorized score-based diffusion for stage-sequence inference",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--sensor", action="append", default=None,
                       help="sensor name (repeatable)")
        p.add_argument("--n-samples", type=int, default=None, dest="n_samples")
        p.add_argument("--lambda", dest="lambda_", default=None,
                       help="combination weight or 'auto'")
        p.set_defaults(fn=fn)
        return p

    add("synth", cmd_synth, help="generate synthetic recording bundles")
    add("train", cmd_train, help="train denoisers on bundles")
    add("sample", cmd_sample, help="run posterior sampling on a bundle")
    add("eval", cmd_eval, help="score predictions against bundle hypnograms")
    add("infogain", cmd_infogain, help="per-epoch information gain for a sensor")
    add("preprocess", cmd_preprocess, help="run the signal pipeline on a bundle")
    p = add("oracle-check", cmd_oracle_check, help="run verification suites")
    p.add_argument("--suite", default="all",
                   help="suite name or 'all' (%s)" % ", ".join(sorted(checks.SUITES)))
    add("degrade", cmd_degrade, help="degradation sweep (zero spans, added noise)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "lambda_", None) not in (None, "auto"):
        try:
            args.lambda_ = float(args.lambda_)
        except ValueError:
            print(f"error: invalid --lambda {args.lambda_!r}", file=sys.stderr)
            return 2
    try:
        return args.fn(args)
    except (ValueError, KeyError, TypeError, OSError,
            jsonschema.ValidationError) as err:
        message = str(err).splitlines()[0] if str(err) else repr(err)
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
