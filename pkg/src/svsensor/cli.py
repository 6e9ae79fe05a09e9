"""Command-line interface.

Subcommands: simulate, plan-gain, plan-bin, capture, compose, calibrate,
theory, evaluate.  Exit codes: 0 success, 2 usage/configuration error,
3 data or shape error, 4 numerical failure.  Diagnostics go to stderr; data
goes to the requested files or stdout.  Every stochastic subcommand requires
an explicit --seed so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import fileio
from .calibrate import dark_variance, fit_read_noise
from .errors import ConfigError, DataError, NumericalError, ShapeError
from .gain import GainMap, capture_adaptive, gain_from_vignetting, plan_gain_roi, quantize_to_ladder
from .metrics import METHODS, evaluate_protocol
from .readout import BinMap, capture_spatially_varying, compose_from_gain_stack
from .scenes import SceneSpec, load_and_normalize
from .sensor import RadianceMap, SensorConfig, estimate_photons, simulate_capture
from .theory import TheoryParams, light_to_bin_lut, sweep_pitch

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(path) -> SensorConfig:
    if path is None:
        return SensorConfig()
    try:
        text = open(path).read()
    except OSError as exc:
        raise DataError(f"cannot read sensor config {path}: {exc}") from exc
    return SensorConfig.from_json(text)


def _load_scene(path, config, mean_frac) -> RadianceMap:
    spec = SceneSpec(source="pfm", path=path, mean_level_frac=mean_frac)
    return load_and_normalize(spec, config)


def _float_list(text):
    return tuple(float(t) for t in text.split(",") if t)


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    scene = _load_scene(args.scene, config, args.mean_frac)
    if args.gain_map:
        gm = GainMap.from_json_dict(fileio.load_json(args.gain_map))
    else:
        gm = GainMap(mode="constant", values=np.asarray(args.gain))
    raw = simulate_capture(scene, gm, None, config, seed=args.seed,
                           threads=args.threads)
    fileio.save_capture(args.output, raw)
    if args.estimate:
        est = estimate_photons(raw, config)
        fileio.write_pfm(args.estimate, est.data)
    return EXIT_OK


def cmd_plan_gain(args) -> int:
    config = _load_config(args.config)
    if args.vignetting:
        vignette = fileio.read_pfm(args.vignetting)
        gm = gain_from_vignetting(vignette, args.roi_size, args.eta, config)
        report = None
    else:
        if not args.pilot:
            raise ConfigError("plan-gain needs --pilot or --vignetting")
        raw = fileio.load_capture(args.pilot, config)
        snapshot = estimate_photons(raw, config)
        gm, report = plan_gain_roi(snapshot, args.roi_size, args.eta, config)
    if args.ladder:
        gm = quantize_to_ladder(gm, _float_list(args.ladder))
    doc = gm.to_json_dict()
    if report is not None:
        doc["report"] = {
            "predicted_saturation_frac": report.predicted_saturation_frac,
            "empty_rois": report.empty_rois,
        }
    fileio.save_json(args.output, doc)
    return EXIT_OK


def cmd_plan_bin(args) -> int:
    config = _load_config(args.config)
    raw = fileio.load_capture(args.pilot, config)
    snapshot = estimate_photons(raw, config)
    params = TheoryParams(
        snr_t=args.snr_t,
        pitch_candidates=tuple(config.pixel_pitch * k for k in (1, 2, 4, 8)),
        light_grid=tuple(np.geomspace(args.light_min, args.light_max, 48)))
    lut = light_to_bin_lut(params, config, config.pixel_pitch, gain=args.gain)
    h, w = snapshot.data.shape
    r = args.roi_size
    rows, cols = -(-h // r), -(-w // r)
    levels = np.where(snapshot.validity_mask,
                      np.clip(snapshot.data, 0, None), np.nan)
    factors = np.empty((rows, cols), dtype=np.int64)
    for i in range(rows):
        for j in range(cols):
            blk = levels[i * r:(i + 1) * r, j * r:(j + 1) * r]
            level = float(np.nanmean(blk)) if np.isfinite(blk).any() else 0.0
            factors[i, j] = lut.lookup(level / config.pixel_pitch ** 2)
    bm = BinMap(roi_size=r, factors=factors, mode=args.mode)
    fileio.save_json(args.output, bm.to_json_dict())
    return EXIT_OK


def cmd_capture(args) -> int:
    config = _load_config(args.config)
    scene = _load_scene(args.scene, config, args.mean_frac)
    if args.per_pixel_eta is not None:
        raw, report = capture_adaptive(scene, args.per_pixel_eta, config,
                                       seed=args.seed)
        print(f"saturation_frac {report.measured_saturation_frac:.6f}",
              file=sys.stderr)
    else:
        if not args.gain_map:
            raise ConfigError("capture needs --gain-map or --per-pixel-eta")
        gm = GainMap.from_json_dict(fileio.load_json(args.gain_map))
        if args.bin_map:
            bm = BinMap.from_json_dict(fileio.load_json(args.bin_map))
            raw, _ = capture_spatially_varying(scene, gm, bm, config,
                                               seed=args.seed,
                                               threads=args.threads)
        else:
            raw = simulate_capture(scene, gm, None, config, seed=args.seed,
                                   threads=args.threads)
    fileio.save_capture(args.output, raw)
    if args.estimate:
        est = estimate_photons(raw, config)
        fileio.write_pfm(args.estimate, est.data)
    return EXIT_OK


def cmd_compose(args) -> int:
    config = _load_config(args.config)
    stack = fileio.load_gain_stack(args.stack, config)
    gm = GainMap.from_json_dict(fileio.load_json(args.gain_map))
    if args.snap:
        gm = quantize_to_ladder(gm, stack.gains)
    raw, provenance = compose_from_gain_stack(stack, gm)
    fileio.save_capture(args.output, raw)
    print("frame provenance:", provenance.tolist(), file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    manifest = fileio.load_json(args.manifest)
    samples = []
    for entry in manifest["gains"]:
        g = float(entry["gain"])
        frames = [fileio.read_pgm16(p) for p in entry["frames"]]
        samples.append((g, dark_variance(frames)))
    profile = fit_read_noise(samples, config if args.electrons else None)
    fileio.save_json(args.output, profile.to_json_dict())
    return EXIT_OK


def cmd_theory(args) -> int:
    config = _load_config(args.config)
    pitches = _float_list(args.pitches)
    lights = _float_list(args.lights)
    params = TheoryParams(snr_t=args.snr_t, pitch_candidates=pitches,
                          light_grid=lights)
    curve = sweep_pitch(params, config, gain=args.gain,
                        contrast_p_squared=args.contrast_p_squared)
    out = sys.stdout if args.output == "-" else open(args.output, "w")
    try:
        out.write("l0,p,f_cutoff\n")
        for i, l0 in enumerate(curve.lights):
            for j, p in enumerate(curve.pitches):
                fc = curve.cutoffs[i, j]
                out.write(f"{l0:.9g},{p:.9g},"
                          f"{'' if np.isnan(fc) else format(fc, '.9g')}\n")
        out.write("l0,p_star,N\n")
        for i, l0 in enumerate(curve.lights):
            ps = curve.best_pitch[i]
            if np.isnan(ps):
                out.write(f"{l0:.9g},,\n")
            else:
                n = int(round((ps / pitches[0]) ** 2))
                out.write(f"{l0:.9g},{ps:.9g},{n}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if args.lut_out:
        lut = light_to_bin_lut(params, config, pitches[0], gain=args.gain,
                               contrast_p_squared=args.contrast_p_squared)
        fileio.save_json(args.lut_out, lut.to_json_dict())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    scene = _load_scene(args.scene, config, args.mean_frac)
    methods = tuple(args.methods.split(",")) if args.methods else METHODS
    report = evaluate_protocol(scene, config, roi_size=args.roi_size,
                               methods=methods, seed=args.seed,
                               eta=args.eta, snr_t=args.snr_t,
                               dump_dir=args.dump_dir)
    fileio.save_json(args.output, report.to_json_dict())
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("\n".join(report.csv_rows()) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="svsensor")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, seeded=True):
        p.add_argument("--config", help="sensor config JSON")
        if seeded:
            p.add_argument("--seed", type=int, required=True)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="capture a scene at one gain")
    common(p)
    p.add_argument("scene", help="radiance map PFM")
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--gain-map", help="gain plan JSON (overrides --gain)")
    p.add_argument("--mean-frac", type=float, default=None,
                   help="normalize scene mean to this fraction of full well")
    p.add_argument("--output", required=True, help="capture base path")
    p.add_argument("--estimate", help="write photon estimate PFM here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan-gain", help="plan per-ROI gains")
    common(p, seeded=False)
    p.add_argument("--pilot", help="pilot capture base path")
    p.add_argument("--vignetting", help="transmission map PFM")
    p.add_argument("--roi-size", type=int, default=128)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--ladder", help="comma-separated discrete gains to snap onto")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_plan_gain)

    p = sub.add_parser("plan-bin", help="plan per-ROI bin factors")
    common(p, seeded=False)
    p.add_argument("--pilot", required=True)
    p.add_argument("--roi-size", type=int, default=128)
    p.add_argument("--snr-t", type=float, default=4.0)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--mode", choices=("additive", "average", "digital"),
                   default="additive")
    p.add_argument("--light-min", type=float, default=0.05)
    p.add_argument("--light-max", type=float, default=4000.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_plan_bin)

    p = sub.add_parser("capture", help="spatially-varying capture")
    common(p)
    p.add_argument("scene")
    p.add_argument("--gain-map")
    p.add_argument("--bin-map")
    p.add_argument("--per-pixel-eta", type=float, default=None,
                   help="closed-loop per-pixel gain with this headroom")
    p.add_argument("--mean-frac", type=float, default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--estimate")
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("compose", help="composite a capture from a gain stack")
    common(p, seeded=False)
    p.add_argument("--stack", required=True, help="gain stack directory")
    p.add_argument("--gain-map", required=True)
    p.add_argument("--snap", action="store_true",
                   help="snap the plan down onto the stack gains first")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("calibrate", help="fit read noise from dark frames")
    common(p, seeded=False)
    p.add_argument("--manifest", required=True,
                   help="JSON: {gains: [{gain, frames: [pgm...]}]}")
    p.add_argument("--electrons", action="store_true",
                   help="convert the fit to electron units")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("theory", help="cutoff-frequency and pitch sweep CSV")
    common(p, seeded=False)
    p.add_argument("--snr-t", type=float, default=4.0)
    p.add_argument("--pitches", required=True, help="comma-separated, ascending")
    p.add_argument("--lights", required=True, help="comma-separated, ascending")
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--contrast-p-squared", action="store_true",
                   help="use the pitch-squared contrast prefactor variant")
    p.add_argument("--output", default="-", help="CSV path or - for stdout")
    p.add_argument("--lut-out", help="also write the light-to-bin LUT JSON")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("evaluate", help="four-method protocol report")
    common(p)
    p.add_argument("scene")
    p.add_argument("--roi-size", type=int, default=128)
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--snr-t", type=float, default=4.0)
    p.add_argument("--mean-frac", type=float, default=0.05)
    p.add_argument("--output", required=True)
    p.add_argument("--csv")
    p.add_argument("--dump-dir", help="write per-method PGM renderings here")
    p.set_defaults(func=cmd_evaluate)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ShapeError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
