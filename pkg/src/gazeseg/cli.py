"""Command line entry points.

    gazeseg serve     --config engine.cfg [--port N]
    gazeseg simulate  --scanpath path.txt --out session.gss [--image vol.gsv]
    gazeseg replay    --session session.gss --backend reference --out masks/
    gazeseg calibrate --points points.txt --out model.txt
    gazeseg export    --session session.gss --out dataset/
"""

from __future__ import annotations

import argparse
import asyncio
import sys

from .backend import make_backend
from .engine import Engine, EngineConfig
from .errors import GazeSegError
from .gaze import read_scanpath
from .geometry import fit_calibration, read_calibration_points, save_calibration
from .prompts import Mode
from .scripted import run_scripted_session
from .session import SessionRecorder, export_dataset, replay


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gazeseg")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the live engine with its message channel")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=None)

    p = sub.add_parser("simulate", help="record a headless scripted session")
    p.add_argument("--scanpath", required=True)
    p.add_argument("--out", required=True, help="session log to write (.gss)")
    p.add_argument("--image", default=None, help=".gsv volume to segment")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.ALL_POINTS.value)
    p.add_argument("--slice", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--no-save", action="store_true")

    p = sub.add_parser("replay", help="re-run a recorded session deterministically")
    p.add_argument("--session", required=True)
    p.add_argument("--backend", default="reference")
    p.add_argument("--out", required=True)
    p.add_argument("--tolerance", type=float, default=None)

    p = sub.add_parser("calibrate", help="fit an affine calibration from point pairs")
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export", help="write (volume, gaze, mask) dataset triples")
    p.add_argument("--session", required=True)
    p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        return {
            "serve": _cmd_serve,
            "simulate": _cmd_simulate,
            "replay": _cmd_replay,
            "calibrate": _cmd_calibrate,
            "export": _cmd_export,
        }[args.command](args)
    except GazeSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import make_gaze_pacer, serve

    config = EngineConfig.from_file(args.config)
    if args.port is not None:
        config.port = args.port
    backend = make_backend(config.backend, config.tolerance)
    recorder = SessionRecorder(config.session_out) if config.session_out else None
    engine = Engine(config, backend, recorder=recorder)
    pacer = make_gaze_pacer(engine, config)
    if pacer is not None:
        pacer.start()
    try:
        asyncio.run(serve(engine, config))
    except KeyboardInterrupt:
        pass
    finally:
        if pacer is not None:
            pacer.stop()
        engine.close()
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    spec = read_scanpath(args.scanpath)
    outcome = run_scripted_session(
        spec,
        args.out,
        args.image,
        mode=Mode(args.mode),
        slice_index=args.slice,
        seed=args.seed,
        tolerance=args.tolerance,
        save=not args.no_save,
    )
    print(f"session: {outcome['session']}")
    for path in outcome["saved_masks"]:
        print(f"saved mask: {path}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    backend = make_backend(args.backend, args.tolerance)
    try:
        finals = replay(args.session, backend, out_dir=args.out)
    finally:
        backend.close()
    for (image_id, z), mask in sorted(finals.items()):
        print(
            f"final mask image={image_id[:12]} slice={z} "
            f"version={mask.version} foreground={mask.foreground_count()}"
        )
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    pairs = read_calibration_points(args.points)
    model = fit_calibration(pairs)
    save_calibration(model, args.out)
    print(f"fitted {len(pairs)} pairs, rms residual {model.rms_residual:.6f} px")
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    triples = export_dataset(args.session, args.out)
    print(f"exported {len(triples)} triple(s) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
