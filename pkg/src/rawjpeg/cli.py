"""Command-line interface: ``rawjpeg {encode,decode,eval,inspect,synth,bench}``.

Exit codes:
    0  success
    1  unexpected internal error
    2  invalid arguments or parameter values
    3  file could not be read or written
    4  malformed input (raw image, JPEG structure or adapter payload)
    5  fitting diverged
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import codec, container, payload
from .exceptions import ContainerError, FitError, ImageFormatError, PayloadError
from .fitter import FitConfig, fit_trace, preset
from .image import FORMATS, NormalizationSpec, infer_format, load_raw, normalize, save_raw, synth_raw, write_pfm_f32
from .metrics import MetricsReport, csv_header, csv_row, format_table, psnr
from .transforms import ColorTransform

log = logging.getLogger("rawjpeg")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_IO, EXIT_PARSE, EXIT_FIT = 0, 1, 2, 3, 4, 5
PRESET_CHOICES = ("identity", "gamma2.2", "srgb")
BENCH_METHODS = ("jpeg", "fixed_gamma", "fit_dct", "fit_nodct")


# -- helpers ---------------------------------------------------------------

def _read_input(args) -> np.ndarray:
    img = load_raw(args.input, args.format)
    if args.black_level is not None or args.white_level is not None:
        spec = NormalizationSpec(args.black_level or 0.0, args.white_level if args.white_level is not None else 65535.0)
        img = normalize(img * 65535.0, spec)
    return img


def _gray_world(img: np.ndarray) -> ColorTransform:
    means = np.maximum(img.reshape(-1, 3).mean(axis=0), 1e-6)
    return ColorTransform(gains=means[1] / means, ccm=np.eye(3), gamma=2.2)


def _fit_config(args, quality: int) -> FitConfig:
    overrides = dict(quality=quality, iterations=args.iterations, thumbnail=args.thumbnail,
                     rng_seed=args.seed, step_size=args.step_size)
    if args.no_dct:
        overrides["use_dct"] = False
    if args.config:
        return FitConfig.from_file(args.config, **overrides)
    return FitConfig(**{k: v for k, v in overrides.items() if v is not None})


def _params_for(args, img):
    """Adapter params and the fit trace (None for presets)."""
    if args.preset == "identity":
        return preset("identity"), None
    if args.preset == "gamma2.2":
        return preset("fixed_gamma", gamma=2.2), None
    if args.preset == "srgb":
        return preset("srgb_baseline", color=_gray_world(img)), None
    result = fit_trace(img, _fit_config(args, args.quality))
    return result.params, result


# -- commands --------------------------------------------------------------

def cmd_encode(args) -> int:
    img = _read_input(args)
    t0 = time.perf_counter()
    params, trace = _params_for(args, img)
    data = codec.encode(img, params, args.quality)
    Path(args.output).write_bytes(data)
    text_len = len(container.extract_com(data))
    print(f"wrote {args.output}: {len(data)} bytes ({text_len} payload bytes), "
          f"Q={args.quality}, {time.perf_counter() - t0:.2f} s")
    if trace is not None:
        print(f"fit: {len(trace.losses) - 1} iterations, loss {trace.initial_loss:.5f} -> {trace.final_loss:.5f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    data = Path(args.input).read_bytes()
    img, params = codec.decode_fast(data)
    fmt = args.format or infer_format(args.output)
    if fmt == "pfm":
        write_pfm_f32(img, args.output)
    else:
        save_raw(img.astype(np.float64), args.output, fmt)
    if not args.quiet:
        print(f"wrote {args.output} ({img.shape[1]}x{img.shape[0]}, {'adapter' if params else 'plain JPEG'})")
    return EXIT_OK


def cmd_eval(args) -> int:
    ref = _read_input(args)
    data = Path(args.jpeg).read_bytes()
    recon, _ = codec.decode(data)
    if recon.shape != ref.shape:
        raise ValueError(f"dimension mismatch: raw {ref.shape[:2]} vs JPEG {recon.shape[:2]}")
    report = MetricsReport.compute(ref, recon, len(data))
    label = args.label or Path(args.jpeg).name
    rows = [{"label": label, **report.__dict__}]
    print(format_table(rows, ["label", "psnr", "ssim", "ms_ssim", "bpp", "wbpp", "cr", "unique_triples", "file_bytes"]))
    if args.csv:
        new = not os.path.exists(args.csv) or os.path.getsize(args.csv) == 0
        with open(args.csv, "a", encoding="utf-8") as fh:
            if new:
                fh.write(csv_header() + "\n")
            fh.write(csv_row(report, label, "") + "\n")
    return EXIT_OK


def cmd_inspect(args) -> int:
    data = Path(args.input).read_bytes()
    segments = container.scan_markers(data)
    for seg in segments:
        tag = " [adapter]" if seg.marker == container.COM and seg.payload.startswith(container.RJA_PREFIX) else ""
        print(f"{seg.offset:8d}  {seg.name:<5} length {seg.length}{tag}")
    found = container.find_adapter_coms(data)
    if not found:
        print("no adapter payload")
        return EXIT_OK
    if len(found) > 1:
        warnings.warn(f"{len(found)} adapter COM segments; decoders use the first")
    text = found[0].payload.decode("ascii", "replace")
    try:
        info = payload.header_info(text)
    except Exception as exc:  # header parse only; full validation below
        raise PayloadError(f"unreadable payload header: {exc}") from exc
    print(f"{info['magic']} v{info['version']}, flags 0x{info['flags']:02X}, "
          f"dct={'yes' if info['dct'] else 'no'}, color={'yes' if info['color'] else 'no'}, "
          f"payload {info['text_bytes']} bytes")
    lo, hi = info["log_gamma_range"]
    print(f"gamma range [{np.exp(lo):.4f}, {np.exp(hi):.4f}], body {info['body_bytes']} bytes, "
          f"deflated {info['compressed_bytes']} bytes")
    payload.deserialize(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    img = synth_raw(args.seed, args.width, args.height, args.profile)
    save_raw(img, args.output, args.format)
    print(f"wrote {args.output} ({args.width}x{args.height}, seed {args.seed})")
    return EXIT_OK


def _bench_one(job):
    """All methods x qualities for one image; runs in a worker process."""
    name, img, qualities, methods, fit_kwargs = job
    fixed = preset("fixed_gamma", gamma=2.2)
    out = []
    for q in qualities:
        for method in methods:
            if method == "jpeg":
                data = container.encode_jpeg(img, q)
                recon = container.decode_jpeg(data)
            else:
                if method == "fixed_gamma":
                    params = fixed
                else:
                    cfg = FitConfig(quality=q, use_dct=method == "fit_dct", **fit_kwargs)
                    params = fit_trace(img, cfg).params
                data = codec.encode(img, params, q)
                recon, _ = codec.decode(data)
            report = MetricsReport.compute(img, recon, len(data))
            out.append({"image": name, "method": method, "quality": q, **report.__dict__})
    return out


def _bench_images(args):
    if args.corpus:
        files = sorted(p for p in Path(args.corpus).iterdir() if p.suffix.lower() in (".png", ".pfm"))
        if not files:
            raise ValueError(f"no .png or .pfm images in {args.corpus}")
        return [(p.name, load_raw(p)) for p in files]
    if args.synth < 1:
        raise ValueError("corpus is empty; pass --corpus DIR or --synth N with N >= 1")
    return [(f"synth{s}", synth_raw(s, args.size, args.size)) for s in range(args.seed, args.seed + args.synth)]


def bench_workers(n_jobs: int) -> int:
    cap = os.environ.get("RJA_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if limit < 1:
        raise ValueError(f"RJA_THREADS must be >= 1, got {cap}")
    return max(1, min(limit, n_jobs))


def cmd_bench(args) -> int:
    qualities = [int(q) for q in args.qualities.split(",")]
    methods = args.methods.split(",")
    unknown = set(methods) - set(BENCH_METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {BENCH_METHODS}")
    fit_kwargs = {"iterations": args.iterations, "thumbnail": args.thumbnail}
    if args.step_size is not None:
        fit_kwargs["step_size"] = args.step_size
    jobs = [(name, img, qualities, methods, fit_kwargs) for name, img in _bench_images(args)]
    workers = bench_workers(len(jobs))
    if workers == 1:
        per_image = [_bench_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            per_image = list(pool.map(_bench_one, jobs))
    rows = [r for image_rows in per_image for r in image_rows]

    summary = []
    for method in methods:
        for q in qualities:
            sel = [r for r in rows if r["method"] == method and r["quality"] == q]
            mean = {k: float(np.mean([r[k] for r in sel])) for k in ("psnr", "ssim", "ms_ssim", "bpp", "wbpp", "cr")}
            summary.append({"method": method, "quality": q, **mean})
    print(format_table(summary, ["method", "quality", "psnr", "ssim", "ms_ssim", "bpp", "wbpp", "cr"]))
    if args.csv:
        cols = ["image", "method", "quality", "psnr", "ssim", "ms_ssim", "bpp", "wbpp", "cr", "unique_triples", "file_bytes"]
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(str(r[c]) for c in cols) + "\n")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _add_input_opts(p):
    p.add_argument("--format", choices=FORMATS, help="raw file format (default: from extension)")
    p.add_argument("--black-level", type=float, help="black level in 16-bit counts")
    p.add_argument("--white-level", type=float, help="white level in 16-bit counts")


def _add_fit_opts(p):
    p.add_argument("--iterations", type=int, help="Adam iterations (default 200)")
    p.add_argument("--thumbnail", type=int, help="fit thumbnail side, power of two (default 256)")
    p.add_argument("--step-size", type=float, help="Adam step size (default 0.03)")
    p.add_argument("--seed", type=int, default=None, help="fit rng seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rawjpeg", description="Store raw images in JPEG files and get them back.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="raw image -> JPEG with embedded adapter parameters")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("-q", "--quality", type=int, default=50)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--preset", choices=PRESET_CHOICES, help="use a fixed preset instead of fitting")
    mode.add_argument("--fit", action="store_true", help="fit parameters to the image (default)")
    p.add_argument("--no-dct", action="store_true", help="fit without the DCT scaling stage")
    p.add_argument("--config", help="key = value fit config file")
    _add_fit_opts(p)
    _add_input_opts(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="JPEG -> raw image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="metrics of a JPEG against the original raw")
    p.add_argument("input", help="original raw image")
    p.add_argument("jpeg")
    p.add_argument("--csv", help="append a CSV row to this file")
    p.add_argument("--label")
    _add_input_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="list JPEG segments and the adapter payload header")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="write a synthetic raw image")
    p.add_argument("output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--profile", default="default")
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="mean metrics per method and quality over a corpus")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--corpus", help="directory of .png/.pfm raws")
    src.add_argument("--synth", type=int, default=10, help="number of synthetic images (default 10)")
    p.add_argument("--size", type=int, default=512, help="synthetic image side")
    p.add_argument("--seed", type=int, default=0, help="first synthetic seed")
    p.add_argument("--qualities", default="25,50,75,95")
    p.add_argument("--methods", default=",".join(BENCH_METHODS))
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--thumbnail", type=int, default=256)
    p.add_argument("--step-size", type=float)
    p.add_argument("--csv", help="write per-image rows to this file")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s",
                        stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (ImageFormatError, ContainerError, PayloadError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except FitError as exc:
        log.error("%s", exc)
        return EXIT_FIT
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
