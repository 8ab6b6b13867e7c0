"""Command-line interface: a thin client over the scoring service.

Every command speaks to the service's HTTP API.  Point ``--service`` at a
running instance (see ``fleur serve``), or omit it and the command boots an
ephemeral in-process service from ``--endpoint``/``--model``/``--cache-dir``
for the duration of the call.  The backend endpoint accepts plain URLs or
``mock:<script.json>`` for scripted runs.
"""

from __future__ import annotations

import base64
import contextlib
import json
import os
from pathlib import Path

import click

from .errors import FleurError
from .service import schemas
from .service.app import ServiceSettings, build_backend, create_app
from .service.client import ServiceClient, local_service

_MEDIA_TYPES = {".png": "image/png", ".gif": "image/gif", ".webp": "image/webp"}


def _media_type(path: Path) -> str:
    return _MEDIA_TYPES.get(path.suffix.lower(), "image/jpeg")


_BACKEND_OPTIONS = [
    click.option("--service", envvar="FLEUR_SERVICE", default=None, metavar="URL",
                 help="URL of a running scoring service; mutually exclusive with --endpoint."),
    click.option("--endpoint", envvar="FLEUR_ENDPOINT", default=None, metavar="URL",
                 help="Backend inference server URL, or mock:<script.json>."),
    click.option("--model", "model_id", envvar="FLEUR_MODEL", default="llava-v1.5-13b",
                 show_default=True, help="Model identifier sent to the backend."),
    click.option("--cache-dir", envvar="FLEUR_CACHE_DIR", type=click.Path(path_type=Path),
                 default=None, help="Generation cache root (omit to disable caching)."),
    click.option("--seed", type=int, default=0, show_default=True,
                 help="Seed for all sampling randomness."),
    click.option("--timeout", envvar="FLEUR_TIMEOUT", type=float, default=120.0,
                 show_default=True, help="Backend request timeout in seconds."),
    click.option("--max-retries", envvar="FLEUR_MAX_RETRIES", type=int, default=3,
                 show_default=True, help="Retry budget for transient backend failures."),
]

_METRIC_OPTIONS = [
    click.option("--mode", type=click.Choice(["fleur", "ref", "raw", "sampled"]), default="fleur",
                 show_default=True, help="Metric mode."),
    click.option("--criteria", default="a", show_default=True,
                 help="Grading-criteria groups: subset of 'abc', or 'none' for no criteria."),
    click.option("--ordering", type=click.Choice(["score-first", "explanation-first"]),
                 default="score-first", show_default=True),
    click.option("--n-samples", type=int, default=None,
                 help="Number of stochastic samples (sampled mode only)."),
    click.option("--temperature", type=float, default=None,
                 help="Sampling temperature (sampled mode only)."),
]


def backend_options(command):
    for option in reversed(_BACKEND_OPTIONS):
        command = option(command)
    return command


def metric_options(command):
    for option in reversed(_METRIC_OPTIONS):
        command = option(command)
    return command


def _metric_fields(mode, criteria, ordering, n_samples, temperature) -> dict:
    if mode != "sampled" and (n_samples is not None or temperature is not None):
        raise click.UsageError("--n-samples/--temperature apply to --mode sampled only")
    fields = {"mode": mode, "criteria": criteria, "ordering": ordering}
    if n_samples is not None:
        fields["n_samples"] = n_samples
    if temperature is not None:
        fields["temperature"] = temperature
    return fields


def _client(ctx_params):
    """Context manager over a remote or ephemeral local service client."""
    service = ctx_params["service"]
    endpoint = ctx_params["endpoint"]
    if service and endpoint:
        raise click.UsageError("--service and --endpoint are mutually exclusive")
    if service:
        @contextlib.contextmanager
        def remote():
            client = ServiceClient(service)
            try:
                yield client
            finally:
                client.close()

        return remote()
    if not endpoint:
        raise click.UsageError("either --service or --endpoint is required")
    settings = ServiceSettings(
        endpoint=endpoint,
        model_id=ctx_params["model_id"],
        cache_dir=ctx_params["cache_dir"],
        seed=ctx_params["seed"],
        timeout=ctx_params["timeout"],
        max_retries=ctx_params["max_retries"],
    )
    return local_service(settings)


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(str(exc))


def _load_config(ctx: click.Context, param, value):
    """Seed option defaults for every subcommand from a JSON config file.

    Explicit flags and environment variables always win over config values.
    """
    path = value or os.environ.get("FLEUR_CONFIG")
    if not path:
        return value
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}")
    if not isinstance(config, dict):
        raise click.UsageError(f"config file {path} must hold a JSON object")
    aliases = {"model": "model_id"}
    normalized = {
        aliases.get(k, k): v for k, v in ((key.replace("-", "_"), val) for key, val in config.items())
    }
    commands = ("serve", "score", "explain", "benchmark", "foil", "ablate")
    ctx.default_map = {command: dict(normalized) for command in commands}
    return value


@click.group()
@click.version_option(package_name="fleur")
@click.option("--config", type=click.Path(path_type=Path), callback=_load_config,
              expose_value=False, is_eager=True,
              help="JSON file of default option values (env: FLEUR_CONFIG).")
def main():
    """Reference-free caption evaluation: smoothed LMM-judged scores with explanations."""


@main.command()
@click.option("--endpoint", envvar="FLEUR_ENDPOINT", required=True,
              help="Backend inference server URL, or mock:<script.json>.")
@click.option("--model", "model_id", envvar="FLEUR_MODEL", default="llava-v1.5-13b", show_default=True)
@click.option("--cache-dir", envvar="FLEUR_CACHE_DIR", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--timeout", envvar="FLEUR_TIMEOUT", type=float, default=120.0, show_default=True)
@click.option("--max-retries", envvar="FLEUR_MAX_RETRIES", type=int, default=3, show_default=True)
@click.option("--concurrency", type=int, default=4, show_default=True,
              help="Max in-flight backend requests.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
def serve(endpoint, model_id, cache_dir, seed, timeout, max_retries, concurrency, host, port):
    """Run the scoring service."""
    import uvicorn

    settings = ServiceSettings(
        endpoint=endpoint, model_id=model_id, cache_dir=cache_dir, seed=seed,
        timeout=timeout, max_retries=max_retries, concurrency=concurrency,
    )
    try:
        app = create_app(settings, backend=build_backend(settings))
    except (FleurError, OSError) as exc:
        raise _fail(exc)
    uvicorn.run(app, host=host, port=port)


def _score_request(image: Path, caption: str, references, fields) -> schemas.ScoreRequest:
    try:
        data = image.read_bytes()
    except OSError as exc:
        raise _fail(exc)
    return schemas.ScoreRequest(
        image_b64=base64.b64encode(data).decode("ascii"),
        media_type=_media_type(image),
        caption=caption,
        references=list(references) or None,
        **fields,
    )


def _reference_check(mode: str, references) -> None:
    if references and mode != "ref":
        raise click.UsageError("--references requires --mode ref")
    if mode == "ref" and not references:
        raise click.UsageError("--mode ref requires at least one --references")


@main.command()
@backend_options
@metric_options
@click.option("--image", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--caption", required=True)
@click.option("--references", multiple=True, help="Reference caption (repeatable; ref mode only).")
def score(service, endpoint, model_id, cache_dir, seed, timeout, max_retries,
          mode, criteria, ordering, n_samples, temperature, image, caption, references):
    """Score one caption against one image; prints the score on a single line."""
    _reference_check(mode, references)
    fields = _metric_fields(mode, criteria, ordering, n_samples, temperature)
    request = _score_request(image, caption, references, fields)
    try:
        with _client(locals()) as client:
            response = client.score(request)
    except FleurError as exc:
        raise _fail(exc)
    click.echo(response.value)
    click.echo(
        f"mode={response.mode} place_mass=({response.place_mass[0]:.6f}, {response.place_mass[1]:.6f}) "
        f"raw={response.raw_text!r} model={response.model_id} templates={response.template_version}",
        err=True,
    )


@main.command()
@backend_options
@metric_options
@click.option("--image", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--caption", required=True)
@click.option("--references", multiple=True, help="Reference caption (repeatable; ref mode only).")
def explain(service, endpoint, model_id, cache_dir, seed, timeout, max_retries,
            mode, criteria, ordering, n_samples, temperature, image, caption, references):
    """Score one caption, then print the model's explanation for the score."""
    _reference_check(mode, references)
    fields = _metric_fields(mode, criteria, ordering, n_samples, temperature)
    request = _score_request(image, caption, references, fields)
    try:
        with _client(locals()) as client:
            response = client.explain(request)
    except FleurError as exc:
        raise _fail(exc)
    click.echo(f"score: {response.score.value}")
    click.echo(response.explanation)


def _run_benchmark(params, dataset: Path, out: Path | None, expect_schema: str | None) -> None:
    fields = _metric_fields(params["mode"], params["criteria"], params["ordering"],
                            params["n_samples"], params["temperature"])
    try:
        dataset_text = dataset.read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail(exc)
    image_root = params.get("image_root")
    request = schemas.BenchmarkRequest(
        dataset_text=dataset_text, expect_schema=expect_schema,
        image_root=str(image_root) if image_root else None, **fields,
    )
    try:
        with _client(params) as client:
            response = client.benchmark(request)
    except FleurError as exc:
        raise _fail(exc)
    click.echo(response.table)
    if out is not None:
        _write_report(out, response)
        click.echo(f"report written to {out}", err=True)


def _write_report(path: Path, response: schemas.BenchmarkResponse) -> None:
    records = [response.summary, *response.items]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n",
                    encoding="utf-8")


@main.command()
@backend_options
@metric_options
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True,
              help="Line-delimited dataset with a header record declaring schema and statistic.")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Write the machine-readable report here.")
@click.option("--image-root", type=click.Path(path_type=Path), default=None,
              help="Directory against which item image_refs resolve (real backends only).")
def benchmark(service, endpoint, model_id, cache_dir, seed, timeout, max_retries,
              mode, criteria, ordering, n_samples, temperature, dataset, out, image_root):
    """Run a benchmark over a judged or pairwise dataset."""
    _run_benchmark(locals(), dataset, out, expect_schema=None)


@main.command()
@backend_options
@metric_options
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.option("--image-root", type=click.Path(path_type=Path), default=None)
def foil(service, endpoint, model_id, cache_dir, seed, timeout, max_retries,
         mode, criteria, ordering, n_samples, temperature, dataset, out, image_root):
    """Run hallucination detection over a foil dataset (intact vs perturbed captions)."""
    _run_benchmark(locals(), dataset, out, expect_schema="foil")


def subset_label(subset: str) -> str:
    cleaned = subset.strip()
    if cleaned in ("", "none", "∅"):
        return "none"
    return "".join(sorted(cleaned))


@main.command()
@backend_options
@metric_options
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--subsets", default="∅,a,ab,ac,abc", show_default=True,
              help="Comma-separated criteria subsets to sweep.")
@click.option("--out", type=click.Path(path_type=Path, file_okay=False), default=None,
              help="Directory for per-subset reports (criteria_<label>.jsonl).")
@click.option("--image-root", type=click.Path(path_type=Path), default=None)
def ablate(service, endpoint, model_id, cache_dir, seed, timeout, max_retries,
           mode, criteria, ordering, n_samples, temperature, dataset, subsets, out, image_root):
    """Sweep grading-criteria subsets over a judged dataset; one report per subset."""
    fields = _metric_fields(mode, criteria, ordering, n_samples, temperature)
    del fields["criteria"]
    subset_list = [s.strip() for s in subsets.split(",")]
    try:
        dataset_text = dataset.read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail(exc)
    request = schemas.AblateRequest(
        dataset_text=dataset_text, subsets=subset_list,
        image_root=str(image_root) if image_root else None, **fields,
    )
    try:
        with _client(locals()) as client:
            response = client.ablate(request)
    except FleurError as exc:
        raise _fail(exc)
    for subset, report in zip(subset_list, response.reports):
        label = subset_label(subset)
        click.echo(f"--- criteria subset: {label}")
        click.echo(report.table)
        if out is not None:
            path = Path(out) / f"criteria_{label}.jsonl"
            _write_report(path, report)
            click.echo(f"report written to {path}", err=True)


if __name__ == "__main__":
    main(prog_name="fleur")
