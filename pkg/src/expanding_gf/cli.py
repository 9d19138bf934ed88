"""Command line entry point.

``run`` executes a scenario locally, or on a running service when
``--server`` is given; ``serve`` starts that service.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex

EXIT_OK = 0
EXIT_CHECK_FAILED = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="expanding-gf")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment scenario")
    run.add_argument("--scenario", choices=ex.SCENARIOS)
    run.add_argument("--methods", help="comma separated subset of " + ",".join(ex.METHODS))
    run.add_argument("--config", help="flat YAML/JSON file of ExperimentConfig fields")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--realizations", type=int)
    run.add_argument("--data-path", help="MovieLens u.data file")
    run.add_argument("--check", action="store_true", help="exit with status 2 if a threshold fails")
    run.add_argument("--server", help="base URL of a running service; run remotely")
    run.add_argument("-v", "--verbose", action="store_true")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return ap


def _config_mapping(args) -> dict:
    """Config file entries overridden by explicit command line options."""
    data = ex.ExperimentConfig.read_mapping(args.config) if args.config else {}
    for key, value in (("scenario", args.scenario), ("methods", args.methods), ("seed", args.seed),
                       ("realizations", args.realizations), ("data_path", args.data_path)):
        if value is not None:
            data[key] = value
    if "scenario" not in data:
        raise SystemExit("error: --scenario is required (or set it in --config)")
    if isinstance(data.get("methods"), str):
        data["methods"] = [m for m in data["methods"].split(",") if m]
    return data


def _run_remote(server: str, mapping: dict, check: bool):
    import httpx

    resp = httpx.post(server.rstrip("/") + "/experiments", json={"config": mapping, "check": check},
                      timeout=None)
    if resp.status_code != 200:
        raise SystemExit(f"error: server returned {resp.status_code}: {resp.text}")
    body = resp.json()
    checks = [(c["name"], c["passed"], c["detail"]) for c in body["checks"]]
    return ex.RunResult.from_dict(body["result"]), checks


def cmd_run(args) -> int:
    mapping = _config_mapping(args)
    if args.server:
        result, checks = _run_remote(args.server, mapping, args.check)
    else:
        cfg = ex.ExperimentConfig.from_mapping(mapping)
        result = ex.run_scenario(cfg)
        checks = ex.acceptance_checks(result) if args.check else []
    ex.emit_results(result, args.out)
    sys.stdout.write(ex.format_table(ex.summary_rows(result)))
    failed = 0
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")
        failed += not passed
    return EXIT_CHECK_FAILED if (args.check and failed) else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("expanding_gf.service:app", host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return cmd_serve(args)


if __name__ == "__main__":
    sys.exit(main())
