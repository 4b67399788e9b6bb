"""Command-line client for the pipeline service.

Every subcommand resolves a PipelineConfig from an optional ``key = value``
config file plus flag overrides, posts it to the service, and prints the
JSON response. By default the service runs in process; --server targets a
running instance instead. Exit codes: 0 success, 2 invalid input, 3 solver
divergence.
"""

import json
import sys
import warnings
from dataclasses import asdict

import click
import httpx

from .pipeline import load_config

_CONFIG_OPTIONS = [
    click.option("--config", "config_path", default=None,
                 type=click.Path(exists=True, dir_okay=False),
                 help="key = value config file"),
    click.option("--dims", default=None, help="tensor extents, comma separated"),
    click.option("--rank", type=int, default=None),
    click.option("--algorithm", default=None,
                 help="als, sgd, psgd or momentum"),
    click.option("--sampler", default=None, help="shuffle or sequential"),
    click.option("--eta0", type=float, default=None, help="base learning rate"),
    click.option("--schedule", default=None),
    click.option("--gamma", type=float, default=None, help="momentum decay"),
    click.option("--beta", type=float, default=None, help="L1 shrinkage weight"),
    click.option("--noise-sigma", type=float, default=None,
                 help="update perturbation scale"),
    click.option("--max-epochs", type=int, default=None),
    click.option("--tol", type=float, default=None),
    click.option("--trace-every", type=int, default=None),
    click.option("--lookahead/--no-lookahead", default=None),
    click.option("--seed", type=int, default=None),
    click.option("--noise-std", type=float, default=None,
                 help="additive noise for synth-cp"),
    click.option("--nu", type=float, default=None, help="target anomaly rate"),
    click.option("--k", type=int, default=None, help="localization neighbors"),
    click.option("--n-freq", type=int, default=None, help="frequency bins kept"),
    click.option("--diff-adjacent/--no-diff-adjacent", default=None),
    click.option("--warmup", type=int, default=None,
                 help="events in the initial batch fit"),
    click.option("--bootstrap-fraction", type=float, default=None),
    click.option("--trials", type=int, default=None),
    click.option("--rmse-target", type=float, default=None),
    click.option("--timing/--no-timing", default=None),
    click.option("--input-path", default=None),
    click.option("--output-dir", default=None),
]


def config_options(fn):
    for opt in reversed(_CONFIG_OPTIONS):
        fn = opt(fn)
    return fn


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _config_payload(config_path, params) -> dict:
    try:
        cfg = load_config(config_path, params)
    except (ValueError, OSError) as exc:
        _fail(str(exc), 2)
    payload = asdict(cfg)
    payload["dims"] = list(payload["dims"])
    return payload


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    with warnings.catch_warnings():
        # the sandboxed starlette build warns about its own httpx shim
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _post(server, path: str, payload: dict) -> dict:
    with _client(server) as client:
        try:
            resp = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            _fail(f"cannot reach service: {exc}", 2)
    if resp.status_code == 200:
        return resp.json()
    try:
        body = resp.json()
    except ValueError:
        body = {}
    message = body.get("message") or body.get("detail") or resp.text
    if body.get("code") == "divergence":
        _fail(str(message), 3)
    _fail(str(message), 2)


def _emit(data: dict):
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group()
@click.option("--server", default=None, envvar="CPSTREAM_SERVER", metavar="URL",
              help="base URL of a running service; omit to run in process")
@click.pass_context
def main(ctx, server):
    """Streaming CP decomposition and one-class monitoring toolkit."""
    ctx.obj = server


@main.command("synth-cp")
@config_options
@click.pass_obj
def synth_cp_cmd(server, config_path, **params):
    """Generate a seeded low-rank tensor plus its true factors."""
    payload = {"config": _config_payload(config_path, params)}
    _emit(_post(server, "/synth/cp", payload))


@main.command("synth-shm")
@config_options
@click.option("--n-healthy", type=int, default=125, show_default=True)
@click.option("--n-damage", "n_damage", type=int, multiple=True, default=(107, 30),
              show_default=True, help="event count per damage class, repeatable")
@click.option("--locations", type=int, default=24, show_default=True)
@click.option("--n-features", type=int, default=600, show_default=True,
              help="frequency resolution of the generated signals")
@click.option("--damage-location", type=int, default=3, show_default=True)
@click.option("--severity", type=float, multiple=True, default=(),
              help="severity per damage class, repeatable")
@click.option("--sample-rate", type=float, default=600.0, show_default=True)
@click.option("--damage-amp", type=float, default=0.5, show_default=True)
@click.pass_obj
def synth_shm_cmd(server, config_path, n_healthy, n_damage, locations, n_features,
                  damage_location, severity, sample_rate, damage_amp, **params):
    """Generate a synthetic monitoring event stream with labeled damage."""
    payload = {
        "config": _config_payload(config_path, params),
        "n_healthy": n_healthy,
        "n_damage_per_class": list(n_damage),
        "locations": locations,
        "n_features": n_features,
        "damage_location": damage_location,
        "severity_levels": list(severity) or None,
        "sample_rate_hz": sample_rate,
        "damage_amp": damage_amp,
    }
    _emit(_post(server, "/synth/shm", payload))


@main.command("decompose")
@config_options
@click.pass_obj
def decompose_cmd(server, config_path, **params):
    """Batch-factorize a stored tensor and write factors plus a trace."""
    payload = {"config": _config_payload(config_path, params)}
    _emit(_post(server, "/decompose", payload))


@main.command("stream")
@config_options
@click.pass_obj
def stream_cmd(server, config_path, **params):
    """Factorize a stored tensor one temporal slice at a time."""
    payload = {"config": _config_payload(config_path, params)}
    _emit(_post(server, "/stream", payload))


@main.command("rank-scan")
@config_options
@click.option("--max-rank", type=int, default=8, show_default=True)
@click.pass_obj
def rank_scan_cmd(server, config_path, max_rank, **params):
    """Score candidate ranks by core consistency and recommend one."""
    payload = {"config": _config_payload(config_path, params), "max_rank": max_rank}
    _emit(_post(server, "/rank-scan", payload))


@main.command("detect")
@config_options
@click.pass_obj
def detect_cmd(server, config_path, **params):
    """Stream a manifest of events and write per-event decision values."""
    payload = {"config": _config_payload(config_path, params)}
    _emit(_post(server, "/detect", payload))


@main.command("localize")
@config_options
@click.pass_obj
def localize_cmd(server, config_path, **params):
    """Stream a manifest of events and write per-location drift scores."""
    payload = {"config": _config_payload(config_path, params)}
    _emit(_post(server, "/localize", payload))


@main.command("evaluate")
@config_options
@click.pass_obj
def evaluate_cmd(server, config_path, **params):
    """Bootstrap holdout evaluation of the detection pipeline."""
    payload = {"config": _config_payload(config_path, params)}
    _emit(_post(server, "/evaluate", payload))


@main.command("compare")
@config_options
@click.option("--algorithms", default="als,sgd,psgd,momentum", show_default=True,
              help="comma-separated solver names")
@click.pass_obj
def compare_cmd(server, config_path, algorithms, **params):
    """Fit several solvers on one tensor and tabulate their traces."""
    names = [a.strip() for a in algorithms.split(",") if a.strip()]
    payload = {"config": _config_payload(config_path, params), "algorithms": names}
    _emit(_post(server, "/compare", payload))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve_cmd(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("cpstream.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
