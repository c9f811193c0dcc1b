"""Command-line entry point: ``arrayfeat <subcommand> ...``.

Every artifact gets a ``<file>.meta`` sidecar holding the full run
configuration, including the exact argv that produced it.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .beamformer import LookDirectionBank, beamformer_features, sdb_weights
from .dsp import log_linear_spectrogram, log_mel_spectrogram, mel_filterbank, stft
from .gccphat import gcc_phat_features
from .geometry import CameraModel, load_geometry, max_lag_samples, select_subset
from .localize import LocalizerParams, localize
from .metrics import EvalConfig, summarize
from .salsa import salsa_features
from .simulate import SOURCE_KINDS, SceneSpec, Segment, random_scene, render_scene
from .validation import check_mic_count

log = logging.getLogger("arrayfeat")

FEATURES = ("gcc", "salsa-lite", "salsa-ipd", "bf", "logmel", "loglin")
BENCH_FEATURES = {
    "gcc-all": dict(backend="gcc", mode="all"),
    "gcc-ref": dict(backend="gcc", mode="ref"),
    "salsa-lite": dict(backend="salsa", salsa_variant="lite"),
    "salsa-ipd": dict(backend="salsa", salsa_variant="ipd"),
    "bf-3": dict(backend="bf", bf_preset="dirs3"),
    "bf-7": dict(backend="bf", bf_preset="dirs7"),
    "bf-15": dict(backend="bf", bf_preset="dirs15"),
}


class CliError(Exception):
    pass


def speed_of_sound() -> float:
    return float(os.environ.get("ARRAYFEAT_C", "343.0"))


def n_workers() -> int:
    return max(1, int(os.environ.get("ARRAYFEAT_THREADS", "1")))


def _run_config(args, argv) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    cfg = {k: (",".join(map(str, v)) if isinstance(v, (list, tuple)) else v) for k, v in cfg.items()}
    cfg["argv"] = json.dumps(list(argv))
    cfg["c"] = speed_of_sound()
    return {f"run.{k}": v for k, v in cfg.items()}


def _write_sidecar(path, meta: dict) -> None:
    with io.atomic_write(io.sidecar_path(path), "w") as fh:
        fh.write(io.format_meta(meta))


def _geometry_and_ids(args):
    geom = load_geometry(args.geometry)
    m = args.mics if args.mics is not None else geom.n_mics
    check_mic_count(m, geom.n_mics)
    return geom, select_subset(geom, m)


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _snr_list(text):
    return [None if v.strip().lower() == "clean" else float(v) for v in text.split(",") if v.strip()]


# --- subcommands -----------------------------------------------------------

def cmd_geometry(args, argv):
    geom = load_geometry(args.geometry)
    cam = CameraModel(args.fov, args.width)
    lag = max_lag_samples(geom.d_max(), cam.fov_h, args.fs, speed_of_sound())
    print(f"name={geom.name} mics={geom.n_mics} d_max={geom.d_max():.4f} m")
    print(f"max_lag={lag} samples, lag bins needed={2 * lag + 1}")
    print("m,aperture_h_m,aperture_v_m,mic_ids")
    for m in range(1, geom.n_mics + 1):
        s = select_subset(geom, m)
        print(f"{m},{s.aperture_h:.3f},{s.aperture_v:.3f},{' '.join(s.mic_ids)}")
    return 0


def cmd_weights(args, argv):
    geom, subset = _geometry_and_ids(args)
    bank = LookDirectionBank.from_preset(args.preset)
    w = sdb_weights(geom, bank, args.fft, args.fs, args.loading, mic_ids=subset.mic_ids, c=speed_of_sound())
    io.write_weights(args.out, w)
    meta = io.parse_meta(io.sidecar_path(args.out).read_text())
    _write_sidecar(args.out, {**meta, "fingerprint": w.fingerprint, **_run_config(args, argv)})
    print(f"wrote {args.out}: {w.w.shape[0]} directions x {w.w.shape[1]} bins x {w.w.shape[2]} mics")
    return 0


def _extract_features(clip, geom, subset, args):
    spec = stft(clip, args.fft, args.hop)
    c = speed_of_sound()
    if args.feat == "gcc":
        max_lag = max_lag_samples(geom.d_max(subset.mic_ids), args.fov, clip.sample_rate, c)
        if 2 * max_lag + 1 > args.width_bins:
            raise CliError(f"{args.width_bins} lag bins cannot hold +/-{max_lag} lags")
        fb = mel_filterbank(args.width_bins, args.fft, clip.sample_rate)
        return gcc_phat_features(spec, args.mode, args.width_bins, fb, ref_channel=args.ref, max_lag=max_lag)
    if args.feat in ("salsa-lite", "salsa-ipd"):
        return salsa_features(spec, args.ref, args.feat.split("-")[1], args.width_bins, c)
    if args.feat == "bf":
        w = sdb_weights(geom, LookDirectionBank.from_preset(args.preset), args.fft, clip.sample_rate,
                        args.loading, mic_ids=subset.mic_ids, c=c)
        return beamformer_features(spec, w, mel_filterbank(args.width_bins, args.fft, clip.sample_rate))
    if args.feat == "logmel":
        return log_mel_spectrogram(spec, args.ref, mel_filterbank(args.width_bins, args.fft, clip.sample_rate))
    return log_linear_spectrogram(spec, args.ref, args.width_bins)


def cmd_extract(args, argv):
    geom, subset = _geometry_and_ids(args)
    clip = io.read_wav(args.wav, args.fs)
    if clip.n_channels != len(subset.mic_ids):
        raise CliError(f"{args.wav} has {clip.n_channels} channels but --mics selects {len(subset.mic_ids)}")
    feats = _extract_features(clip, geom, subset, args)
    extra = {"clip_id": Path(args.wav).stem, "mic_ids": " ".join(subset.mic_ids),
             "aperture_h": subset.aperture_h, **_run_config(args, argv)}
    io.write_features(args.out, feats, extra)
    print(f"wrote {args.out}: shape {'x'.join(map(str, feats.shape))}")
    return 0


def _scene_from_args(args, snr):
    if args.scene:
        base = SceneSpec.from_text(Path(args.scene).read_text())
        return SceneSpec(base.segments, snr if args.snr_grid else base.snr_db if snr is None else snr,
                         args.seed if args.seed is not None else base.seed, base.duration)
    seed = args.seed if args.seed is not None else 0
    if args.az is None:
        return random_scene(seed, args.duration, snr, kind=args.kind)
    end = args.end if args.end is not None else args.duration - 0.2
    return SceneSpec((Segment(args.start, end, args.az, args.kind),), snr, seed, args.duration)


def cmd_simulate(args, argv):
    geom, subset = _geometry_and_ids(args)
    cam = CameraModel(args.fov, args.width)
    grid = _snr_list(args.snr_grid) if args.snr_grid else [args.snr]
    rendered = []
    for snr in grid:
        scene = _scene_from_args(args, snr)
        clip, labels = render_scene(scene, geom, cam, args.fs, subset.mic_ids, speed_of_sound())
        prefix = Path(args.out)
        if args.snr_grid:
            tag = "clean" if snr is None else f"{snr:g}dB"
            prefix = prefix.parent / f"{prefix.name}_snr{tag}"
        rendered.append((prefix, scene, clip, labels))
    # everything is rendered before the first write
    for prefix, scene, clip, labels in rendered:
        meta = {"mic_ids": " ".join(subset.mic_ids), "snr_db": scene.snr_db, **_run_config(args, argv)}
        wav = prefix.with_name(prefix.name + ".wav")
        io.write_wav(wav, clip)
        _write_sidecar(wav, meta)
        io.write_labels(prefix.with_name(prefix.name + ".labels.csv"), labels)
        with io.atomic_write(prefix.with_name(prefix.name + ".scene.txt"), "w") as fh:
            fh.write(scene.to_text())
        print(f"wrote {wav} ({clip.n_channels} ch, {clip.duration:.2f} s, snr={scene.snr_db})")
    return 0


def _localizer_params(args) -> LocalizerParams:
    return LocalizerParams(backend=args.backend, mode=args.mode, ref_channel=args.ref,
                           salsa_variant=args.variant, bf_preset=args.preset, c=speed_of_sound())


def cmd_localize(args, argv):
    geom, subset = _geometry_and_ids(args)
    clip = io.read_wav(args.wav, args.fs, subset.mic_ids if args.mics else None)
    if clip.n_channels != len(subset.mic_ids):
        raise CliError(f"{args.wav} has {clip.n_channels} channels but --mics selects {len(subset.mic_ids)}")
    clip = clip.__class__(clip.samples, clip.sample_rate, subset.mic_ids)
    track = localize(clip, geom, CameraModel(args.fov, args.width), _localizer_params(args))
    io.write_predictions(args.out, track)
    _write_sidecar(args.out, _run_config(args, argv))
    print(f"wrote {args.out}: {len(track)} frames")
    return 0


def cmd_eval(args, argv):
    pred = io.read_predictions(args.pred)
    gt = io.read_labels(args.gt)
    if len(pred) != len(gt):
        raise CliError(f"prediction has {len(pred)} frames, labels have {len(gt)}")
    cfg = EvalConfig(args.tol_deg, CameraModel(args.fov, args.width), args.thresholds)
    res = summarize(pred, gt, cfg)
    tol = f"{args.tol_deg:g}"
    print(f"AP={res.ap:.3f}")
    print(f"F1@{tol}deg={res.f1:.3f}")
    print(f"aD={res.aD:.1f}px")
    print(f"DetErr={100 * res.det_err:.1f}%")
    if args.out:
        io.write_eval(args.out, res, args.curve)
        _write_sidecar(args.out, {"tolerance_px": cfg.tolerance_px, **_run_config(args, argv)})
    return 0


def _bench_one(job):
    feat, m, snr, seed, n_scenes, geometry, fs, fov, width, c = job
    geom = load_geometry(geometry)
    subset = select_subset(geom, m)
    cam = CameraModel(fov, width)
    params = LocalizerParams(c=c, **BENCH_FEATURES[feat])
    scores = []
    for k in range(n_scenes):
        scene = random_scene(seed * 1000 + k, snr_db=snr)
        clip, gt = render_scene(scene, geom, cam, fs, subset.mic_ids, c)
        scores.append(summarize(localize(clip, geom, cam, params), gt, EvalConfig(camera=cam)).as_dict())
    mean = {k: float(np.nanmean([s[k] for s in scores])) for k in scores[0]}
    return [feat, m, f"{subset.aperture_h:.3f}", "clean" if snr is None else f"{snr:g}", seed,
            f"{mean['ap']:.6f}", f"{mean['f1']:.6f}", f"{mean['aD']:.3f}", f"{mean['det_err']:.6f}"]


def cmd_bench(args, argv):
    feats = [f.strip() for f in args.feats.split(",")]
    unknown = [f for f in feats if f not in BENCH_FEATURES]
    if unknown:
        raise CliError(f"unknown bench features {unknown}; choose from {sorted(BENCH_FEATURES)}")
    geom = load_geometry(args.geometry)
    mics = _int_list(args.mics_grid)
    for m in mics:
        check_mic_count(m, geom.n_mics)
        if m < 2:
            raise CliError("bench needs at least 2 mics per configuration")
    jobs = [(f, m, snr, seed, args.scenes, args.geometry, args.fs, args.fov, args.width, speed_of_sound())
            for seed in _int_list(args.seeds) for f in feats for m in mics for snr in _snr_list(args.snrs)]
    if n_workers() > 1:
        with ProcessPoolExecutor(n_workers()) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "mics", "aperture_h", "snr_db", "seed", "ap", "f1", "aD", "det_err"])
    w.writerows(rows)
    with io.atomic_write(args.out, "w") as fh:
        fh.write(buf.getvalue())
    _write_sidecar(args.out, _run_config(args, argv))
    print(f"wrote {args.out}: {len(rows)} rows")
    return 0


# --- parser ----------------------------------------------------------------

def _common(p, mics=True):
    p.add_argument("--geometry", help="geometry file (default: bundled AVA16)")
    if mics:
        p.add_argument("--mics", type=int, help="use the first M mics of the subset order")
    p.add_argument("--fs", type=float, default=48000.0, help="sample rate in Hz")
    p.add_argument("--fov", type=float, default=55.0, help="camera horizontal field of view, degrees")
    p.add_argument("--width", type=int, default=2448, help="image width in pixels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arrayfeat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="describe the array, its subsets and the lag budget")
    _common(p, mics=False)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("weights", help="compute super-directive beamformer weights (SDBW file)")
    _common(p)
    p.add_argument("--preset", default="dirs15", help="dirs3 | dirs7 | dirs15")
    p.add_argument("--loading", type=float, default=1e-2)
    p.add_argument("--fft", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("extract", help="extract a feature tensor (AFT1 file) from a WAV")
    _common(p)
    p.add_argument("wav")
    p.add_argument("--feat", choices=FEATURES, required=True)
    p.add_argument("--mode", choices=("all", "ref"), default="all", help="GCC pairing")
    p.add_argument("--ref", type=int, default=0, help="reference channel index")
    p.add_argument("--preset", default="dirs15", help="beamformer look directions")
    p.add_argument("--loading", type=float, default=1e-2)
    p.add_argument("--width-bins", type=int, default=64, help="mel / lag / linear bin count")
    p.add_argument("--fft", type=int, default=512)
    p.add_argument("--hop", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="render a far-field scene to WAV + label CSV")
    _common(p)
    p.add_argument("--az", type=float, help="single-talker azimuth in degrees (default: random scene)")
    p.add_argument("--start", type=float, default=0.2)
    p.add_argument("--end", type=float)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--kind", choices=SOURCE_KINDS, default="speech-shaped-noise")
    p.add_argument("--scene", help="scene text file (overrides --az)")
    p.add_argument("--snr", type=float, help="pink-noise SNR in dB (omit for a clean scene)")
    p.add_argument("--snr-grid", help="comma-separated SNRs, e.g. 0,10,20,30,40 (or 'clean')")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", help="run the baseline localiser on a WAV")
    _common(p)
    p.add_argument("wav")
    p.add_argument("--backend", choices=("gcc", "salsa", "bf"), default="gcc")
    p.add_argument("--mode", choices=("all", "ref"), default="all")
    p.add_argument("--ref", type=int, default=0)
    p.add_argument("--variant", choices=("lite", "ipd"), default="lite")
    p.add_argument("--preset", default="dirs15")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="score predictions against labels")
    _common(p, mics=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tol-deg", type=float, default=2.0)
    p.add_argument("--thresholds", type=int, default=101)
    p.add_argument("--out", help="write key=value report here")
    p.add_argument("--curve", help="write the PR curve CSV here (with --out)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="feature x mic count x SNR sweep on simulated scenes")
    _common(p, mics=False)
    p.add_argument("--feats", default="gcc-ref,salsa-lite")
    p.add_argument("--mics-grid", default="2,4,8,16")
    p.add_argument("--snrs", default="clean")
    p.add_argument("--seeds", default="0")
    p.add_argument("--scenes", type=int, default=4, help="scenes per (feature, M, SNR, seed)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (CliError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
