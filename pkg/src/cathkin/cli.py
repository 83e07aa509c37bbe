"""Command-line client for the HTTP service.

Subcommands talk to an in-process app by default, so nothing has to be
running; ``--server URL`` posts the same requests to a live instance
instead. File handling stays on this side: the config file is read here
and sent as YAML text, calibration samples and coil readings are parsed
here, and experiment outputs are written here from the rendered strings
the service returns.

Exit codes: 0 success, 1 failed check or transport error, 2 bad
configuration or usage, 3 plant fault.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path

import httpx

from .actuation import load_calibration_samples
from .control import SCHEMES

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_PLANT = 3

OUT_DIR_ENV = "CATHKIN_OUT_DIR"


def _vec6(text: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")
    if len(values) != 6:
        raise argparse.ArgumentTypeError(f"expected 6 values, got {len(values)}")
    return values


def _read_config(path: str | None) -> str | None:
    if path is None:
        return None
    try:
        return Path(path).read_text()
    except OSError as err:
        print(f"cannot read config {path}: {err}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


async def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=600.0) as client:
            return await client.post(path, json=payload)
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://cathkin.local", timeout=600.0
    ) as client:
        return await client.post(path, json=payload)


def _call(args, path: str, payload: dict) -> dict:
    """POST and return the parsed body, or exit with the mapped code."""
    try:
        resp = asyncio.run(_post(args.server, path, payload))
    except httpx.HTTPError as err:
        print(f"request to {path} failed: {err}", file=sys.stderr)
        raise SystemExit(EXIT_FAILED)
    if resp.status_code == 200:
        return resp.json()
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = resp.text
    print(f"{path} answered {resp.status_code}: {json.dumps(detail)}", file=sys.stderr)
    if resp.status_code == 422:
        raise SystemExit(EXIT_CONFIG)
    if resp.status_code == 409:
        raise SystemExit(EXIT_PLANT)
    raise SystemExit(EXIT_FAILED)


def _base_payload(args) -> dict:
    payload = {}
    text = _read_config(getattr(args, "config", None))
    if text is not None:
        payload["config_yaml"] = text
    return payload


def _cmd_fk(args) -> int:
    payload = _base_payload(args)
    if args.q is not None:
        payload["q"] = args.q
    if args.psi is not None:
        payload["psi"] = args.psi
    body = _call(args, "/fk", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def _cmd_jacobian_check(args) -> int:
    payload = _base_payload(args)
    if args.q is not None:
        payload["q"] = args.q
    if args.psi is not None:
        payload["psi"] = args.psi
    payload["n_samples"] = args.n_samples
    payload["seed"] = args.seed
    payload["step"] = args.step
    payload["tolerance"] = args.tolerance
    body = _call(args, "/jacobian-check", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK if body["passed"] else EXIT_FAILED


def _cmd_calibrate(args) -> int:
    payload = _base_payload(args)
    try:
        samples = load_calibration_samples(args.samples)
    except OSError as err:
        print(f"cannot read samples {args.samples}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        print(str(err), file=sys.stderr)
        return EXIT_CONFIG
    payload["samples"] = [
        {"q": [float(v) for v in s.q.as_array()], "theta1": s.theta1, "theta2": s.theta2}
        for s in samples
    ]
    body = _call(args, "/calibrate", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def _cmd_fit_shape(args) -> int:
    payload = _base_payload(args)
    try:
        readings = json.loads(Path(args.readings).read_text())
    except OSError as err:
        print(f"cannot read readings {args.readings}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        print(f"readings file is not valid JSON: {err}", file=sys.stderr)
        return EXIT_CONFIG
    payload["readings"] = readings
    if args.initial is not None:
        payload["initial"] = args.initial
    if args.exposed_length is not None:
        payload["exposed_length"] = args.exposed_length
    body = _call(args, "/fit-shape", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def _cmd_follow_path(args) -> int:
    payload = _base_payload(args)
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.scheme:
        payload["schemes"] = args.scheme
    body = _call(args, "/follow-path", payload)

    out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV) or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in body["files"].items():
        target = out_dir / name
        target.write_text(content)
        written.append(target)

    for scheme in body["schemes"]:
        agg = body["summaries"][scheme]
        print(
            f"{scheme}: {agg['n_waypoints']:.0f} waypoints,"
            f" converged {100.0 * agg['convergence_rate']:.1f}%,"
            f" mean in-plane {agg['mean_in_plane_mm']:.3f} mm,"
            f" out-of-plane {agg['mean_out_of_plane_mm']:.3f} mm,"
            f" model gap {agg['mean_model_gap_mm']:.3f} mm"
        )
    for target in written:
        print(f"wrote {target}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cathkin",
        description="Two-segment tendon robot kinematics, estimation, and"
                    " control experiments.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="experiment config file (YAML)")
    common.add_argument("--server", metavar="URL",
                        help="POST to a running service instead of in-process")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fk", parents=[common],
                       help="forward kinematics of one configuration")
    p.add_argument("--q", type=_vec6, metavar="D1,B1,G1,D2,B2,G2",
                   help="handle command (rad, mm, rad per segment)")
    p.add_argument("--psi", type=_vec6, metavar="T1,L1,D1,T2,L2,D2",
                   help="shape vector instead of a command")
    p.set_defaults(func=_cmd_fk)

    p = sub.add_parser("jacobian-check", parents=[common],
                       help="verify analytic Jacobians against finite differences")
    p.add_argument("--q", type=_vec6, metavar="D1,B1,G1,D2,B2,G2")
    p.add_argument("--psi", type=_vec6, metavar="T1,L1,D1,T2,L2,D2")
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=_cmd_jacobian_check)

    p = sub.add_parser("calibrate", parents=[common],
                       help="fit bend gains from recorded angle samples")
    p.add_argument("--samples", required=True, metavar="FILE",
                   help="text file, one record per line: delta1 beta1 gamma1"
                        " delta2 beta2 gamma2 theta1 theta2")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("fit-shape", parents=[common],
                       help="estimate the shape vector from two coil readings")
    p.add_argument("--readings", required=True, metavar="FILE",
                   help="JSON list of two {position, tangent, coil_id} objects")
    p.add_argument("--initial", type=_vec6, metavar="T1,L1,D1,T2,L2,D2",
                   help="warm start (default: model shape at the config home)")
    p.add_argument("--exposed-length", type=float,
                   help="straight inner-body length between segments (mm)")
    p.set_defaults(func=_cmd_fit_shape)

    p = sub.add_parser("follow-path", parents=[common],
                       help="run the path-following experiment and write reports")
    p.add_argument("--scheme", action="append", choices=list(SCHEMES),
                   help="override configured schemes (repeatable)")
    p.add_argument("--seed", type=int, help="override configured seed")
    p.add_argument("--out", metavar="DIR",
                   help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    p.set_defaults(func=_cmd_follow_path)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
