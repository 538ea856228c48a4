"""Command-line front end: scene generation, enhancement, evaluation, sweeps.

Exit codes: 0 on success, 2 for input or configuration errors, 3 when an
internal consistency check fails. The DEREV_SEED environment variable
overrides any configured scene seed.
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .configio import (ConfigError, ManifestWriter, config_snapshot,
                       pipeline_config_from_entries, read_config_file,
                       scene_spec_from_entries)
from .metrics import (ConsistencyError, ShadowTrace, evaluate_scene,
                      shadow_apply)
from .pipeline import MODES, run
from .scene import build_scene
from .stft import StftConfig, analyze
from .wavio import read_wav, write_wav

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONSISTENCY = 3


class InputError(RuntimeError):
    pass


def _env_seed():
    raw = os.environ.get("DEREV_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise InputError(f"DEREV_SEED must be an integer, got {raw!r}") from exc


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {p}")
    return p


def _load_scene_spec(path):
    entries = read_config_file(_require_file(path))
    spec, geometry, sample_rate, extras = scene_spec_from_entries(entries)
    seed = _env_seed()
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec, geometry, sample_rate, extras


def cmd_simulate(args) -> int:
    spec, geometry, sample_rate, extras = _load_scene_spec(args.spec)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    manifest = ManifestWriter("simulate", __version__)
    manifest.add_input(args.spec)
    manifest.set_seed(spec.seed)
    manifest.set_config(scene=config_snapshot(spec),
                        geometry=config_snapshot(geometry),
                        sample_rate=sample_rate)

    source = noise = None
    if extras["source_wav"]:
        rate, data = read_wav(_require_file(extras["source_wav"]))
        if rate != sample_rate:
            raise InputError(f"source rate {rate} != configured {sample_rate}")
        manifest.add_input(extras["source_wav"])
        source = data[0]
        needed = int(round(spec.duration * sample_rate))
        if len(source) < needed:
            raise InputError("source shorter than the configured duration")
        source = source[:needed]
    if extras["noise_wav"]:
        rate, data = read_wav(_require_file(extras["noise_wav"]))
        if rate != sample_rate:
            raise InputError(f"noise rate {rate} != configured {sample_rate}")
        manifest.add_input(extras["noise_wav"])
        noise = data

    manifest.start_stage("synthesize")
    scene = build_scene(spec, geometry, sample_rate, source=source, noise=noise)
    manifest.end_stage()

    manifest.start_stage("write")
    for name, data in (("y", scene.mixture), ("x_e", scene.direct_early),
                       ("x_r", scene.late_reverb), ("v", scene.noise),
                       ("source", scene.source)):
        path = outdir / f"{name}.wav"
        write_wav(path, sample_rate, data)
        manifest.add_output(path)
    manifest.end_stage()
    manifest.write(outdir / "manifest.json")
    print(f"wrote scene ({geometry.num_mics} ch, {sample_rate} Hz, "
          f"t60={spec.t60}s, seed={spec.seed}) to {outdir}")
    return EXIT_OK


def _save_trace(path, trace: ShadowTrace) -> None:
    np.savez(path,
             frame_len=trace.stft.frame_len, hop=trace.stft.hop,
             fft_len=trace.stft.fft_len, sample_rate=trace.stft.sample_rate,
             reference_index=trace.reference_index,
             prediction_delay=trace.prediction_delay,
             prediction_order=trace.prediction_order,
             mode=trace.mode, num_samples=trace.num_samples,
             beam_weights=trace.beam_weights,
             predict_weights=trace.predict_weights)


def load_trace(path) -> ShadowTrace:
    with np.load(path) as data:
        cfg = StftConfig(frame_len=int(data["frame_len"]), hop=int(data["hop"]),
                         fft_len=int(data["fft_len"]),
                         sample_rate=int(data["sample_rate"]))
        return ShadowTrace(
            stft=cfg,
            reference_index=int(data["reference_index"]),
            prediction_delay=int(data["prediction_delay"]),
            prediction_order=int(data["prediction_order"]),
            mode=str(data["mode"]),
            num_samples=int(data["num_samples"]),
            beam_weights=data["beam_weights"],
            predict_weights=data["predict_weights"],
        )


def cmd_enhance(args) -> int:
    entries = read_config_file(_require_file(args.config))
    config = pipeline_config_from_entries(entries)
    if args.mode:
        config = replace(config, mode=args.mode)

    rate, x = read_wav(_require_file(args.input))
    manifest = ManifestWriter("enhance", __version__)
    manifest.add_input(args.config)
    manifest.add_input(args.input)
    manifest.set_config(pipeline=config_snapshot(config), mode=config.mode)

    manifest.start_stage("enhance")
    try:
        result = run(config, x, sample_rate=rate,
                     collect_trace=args.trace is not None)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    manifest.end_stage()

    manifest.start_stage("write")
    write_wav(args.output, config.stft.sample_rate, result.enhanced)
    manifest.add_output(args.output)
    if args.trace is not None:
        _save_trace(args.trace, result.trace)
        manifest.add_output(args.trace)
    manifest.end_stage()
    manifest.write(Path(args.output).with_suffix(".manifest.json"))
    repaired = int(result.diagnostics.nonfinite_repaired.sum())
    print(f"enhanced {args.input} -> {args.output} (mode={config.mode}, "
          f"{result.diagnostics.frame_indices.size} frames logged, "
          f"{repaired} repaired bins)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scene_dir = Path(args.scene_dir)
    components = {}
    for name in ("x_e", "x_r", "v"):
        rate, data = read_wav(_require_file(scene_dir / f"{name}.wav"))
        components[name] = data
    trace = load_trace(_require_file(args.trace))
    if rate != trace.stft.sample_rate:
        raise InputError(f"scene rate {rate} != trace rate "
                         f"{trace.stft.sample_rate}")

    manifest = ManifestWriter("evaluate", __version__)
    for name in ("x_e", "x_r", "v"):
        manifest.add_input(scene_dir / f"{name}.wav")
    manifest.add_input(args.trace)

    manifest.start_stage("evaluate")
    report = evaluate_scene(trace, components["x_e"], components["x_r"],
                            components["v"], rate)
    manifest.end_stage()

    if args.enhanced:
        _, enhanced = read_wav(_require_file(args.enhanced))
        manifest.add_input(args.enhanced)
        mixture = components["x_e"] + components["x_r"] + components["v"]
        replay = shadow_apply(trace, mixture)
        scale = np.linalg.norm(replay)
        drift = np.linalg.norm(replay - enhanced[0]) / scale if scale else 0.0
        # float32 WAV quantization bounds the agreement
        if drift > 1e-4:
            raise ConsistencyError(
                f"enhanced file disagrees with trace replay: {drift:.3e} relative"
            )

    out = Path(args.output)
    out.write_text(report.to_csv(), encoding="utf-8")
    manifest.add_output(out)
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"delta_sir = {report.delta_sir:+.2f} dB (in {report.sir_in:+.2f}, "
          f"out {report.sir_out:+.2f}); report -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    entries = read_config_file(_require_file(args.grid))
    t60_values = [float(v) for v in entries.pop("t60_grid", "0.4,0.5,0.6,0.7,0.8").split(",")]
    modes = [m.strip() for m in entries.pop("modes", ",".join(MODES)).split(",")]
    seeds = [int(v) for v in entries.pop("seeds", "0,1,2,3,4").split(",")]
    env_seed = _env_seed()
    if env_seed is not None:
        seeds = [env_seed + i for i in range(len(seeds))]
    for mode in modes:
        if mode not in MODES:
            raise InputError(f"unknown mode {mode!r} in grid")

    spec_base, geometry, sample_rate, _ = scene_spec_from_entries(
        {k: v for k, v in entries.items()
         if k not in ("fusion_weight", "psd_smoothing", "transition_factor",
                      "diagonal_loading", "prediction_delay", "prediction_order")})
    pipe_entries = {k: v for k, v in entries.items()
                    if k in ("fusion_weight", "psd_smoothing", "transition_factor",
                             "diagonal_loading", "prediction_delay",
                             "prediction_order", "mic_count", "mic_spacing",
                             "reference_index", "speed_of_sound", "sample_rate")}

    manifest = ManifestWriter("sweep", __version__)
    manifest.add_input(args.grid)
    manifest.set_seed(seeds)
    manifest.set_config(t60_grid=t60_values, modes=modes,
                        scene=config_snapshot(spec_base),
                        geometry=config_snapshot(geometry))

    rows = []
    manifest.start_stage("sweep")
    for t60 in t60_values:
        scenes = {}
        for seed in seeds:
            spec = replace(spec_base, t60=t60, seed=seed)
            scenes[seed] = build_scene(spec, geometry, sample_rate)
        for mode in modes:
            cfg = pipeline_config_from_entries({
                **pipe_entries,
                "doa_azimuth": repr(spec_base.doa_azimuth),
                "doa_elevation": repr(spec_base.doa_elevation),
                "mode": mode,
            })
            metrics = []
            for seed in seeds:
                scene = scenes[seed]
                result = run(cfg, scene.mixture)
                report = evaluate_scene(result.trace, scene.direct_early,
                                        scene.late_reverb, scene.noise,
                                        sample_rate)
                metrics.append(report)
            rows.append({
                "t60": t60,
                "mode": mode,
                "seeds": len(seeds),
                "sir_in_db": np.mean([m.sir_in for m in metrics]),
                "sir_out_db": np.mean([m.sir_out for m in metrics]),
                "delta_sir_db": np.mean([m.delta_sir for m in metrics]),
                "segsnr_db": np.mean([m.segsnr for m in metrics]),
                "lsd_db": np.mean([m.lsd for m in metrics]),
            })
            print(f"t60={t60} mode={mode}: delta_sir="
                  f"{rows[-1]['delta_sir_db']:+.2f} dB", flush=True)
    manifest.end_stage()

    header = ["t60", "mode", "seeds", "sir_in_db", "sir_out_db",
              "delta_sir_db", "segsnr_db", "lsd_db"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            f"{row[h]:.6f}" if isinstance(row[h], float) else str(row[h])
            for h in header))
    out = Path(args.output)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.add_output(out)
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"wrote {len(rows)} rows -> {out}")
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    rate, x = read_wav(_require_file(args.input))
    cfg = StftConfig(sample_rate=rate)
    spec = analyze(x[args.channel], cfg)
    mag = np.abs(spec.data[0])
    peak = mag.max()
    if peak == 0.0:
        db = np.full_like(mag, -80.0)
    else:
        db = 20.0 * np.log10(np.maximum(mag, peak * 1e-4))  # 80 dB floor
    lines = [",".join(f"{v:.3f}" for v in row) for row in db]
    Path(args.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {db.shape[0]} frames x {db.shape[1]} bins -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="derev",
        description="Frame-online multichannel dereverberation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("spec", help="scene spec file (key = value)")
    p.add_argument("outdir", help="output directory for component WAVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enhance", help="dereverberate a multichannel WAV")
    p.add_argument("config", help="pipeline config file (key = value)")
    p.add_argument("input", help="multichannel input WAV")
    p.add_argument("output", help="enhanced mono WAV")
    p.add_argument("--mode", choices=MODES, default=None,
                   help="override the configured processing mode")
    p.add_argument("--trace", default=None,
                   help="write the shadow-filtering trace (.npz)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score an enhancement run")
    p.add_argument("scene_dir", help="directory with x_e.wav, x_r.wav, v.wav")
    p.add_argument("trace", help="shadow trace from enhance --trace")
    p.add_argument("enhanced", nargs="?", default=None,
                   help="enhanced WAV to cross-check against the trace")
    p.add_argument("-o", "--output", default="report.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="decay-time x mode metric grid")
    p.add_argument("grid", help="grid spec file (key = value)")
    p.add_argument("-o", "--output", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrogram", help="export dB magnitudes as CSV")
    p.add_argument("input", help="input WAV")
    p.add_argument("output", help="output CSV (frames x bins)")
    p.add_argument("--channel", type=int, default=0)
    p.set_defaults(func=cmd_spectrogram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsistencyError as exc:
        print(f"consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY


if __name__ == "__main__":
    sys.exit(main())
