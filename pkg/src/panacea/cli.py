"""Command-line pipeline: calibrate -> quantize -> slice -> compress ->
gemm -> simulate/sweep -> report.

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 I/O or format error. Every command is deterministic under a fixed seed
(default taken from AQS_SEED, else 0) and artifacts embed enough
configuration to be regenerated.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import gemm as gemm_mod
from . import quant, rle, sim, slicing, tensorio
from .report import write_json, write_report
from .sim import HardwareConfig

EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _default_seed() -> int:
    try:
        return int(os.environ.get("AQS_SEED", "0"))
    except ValueError:
        return 0


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (tensorio.TensorFormatError, rle.MalformedStream) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_IO)
        except OSError as e:
            click.echo(f"i/o error: {e}", err=True)
            sys.exit(EXIT_IO)
        except (ValueError, KeyError) as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _load_params(path) -> quant.QuantParams:
    return quant.QuantParams.from_json(Path(path).read_text(encoding="utf-8"))


def _load_hw(path) -> HardwareConfig:
    if path is None:
        return HardwareConfig()
    return HardwareConfig.from_json(Path(path).read_text(encoding="utf-8"))


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _sizes(text: str) -> list[tuple[int, int, int]]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        dims = tuple(int(d) for d in part.lower().split("x"))
        if len(dims) != 3:
            raise ValueError(f"size {part!r} must be MxKxN")
        out.append(dims)
    return out


@click.group()
def main():
    """Bit-slice quantized GEMM toolkit and accelerator model."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--bits", default=8, show_default=True)
@click.option("--target-sparsity", default=0.9, show_default=True)
@click.option("--zpm/--no-zpm", default=True, show_default=True)
@click.option("--dbs/--no-dbs", default=True, show_default=True)
@click.option("--output", required=True, type=click.Path())
@_guarded
def calibrate(inputs, bits, target_sparsity, zpm, dbs, output):
    """Derive activation quantization parameters from calibration matrices."""
    batches = [tensorio.load_matrix(p).data for p in inputs]
    params, stats = quant.calibrate(
        batches, b=bits, target_sparsity=target_sparsity, zpm=zpm, dbs=dbs
    )
    Path(output).write_text(params.to_json() + "\n", encoding="utf-8")
    mass = quant.skip_range_mass(stats.histogram, params.skip_value, params.lo_width)
    click.echo(
        f"wrote {output}: type {params.dbs_type} (l={params.lo_width}), "
        f"zp={params.zero_point}, r={params.skip_value}, "
        f"skip-range mass {mass:.3f}"
    )


@main.command()
@click.argument("input", type=click.Path(exists=True))
@click.option("--scheme", type=click.Choice(["symmetric", "asymmetric"]), default="symmetric",
              show_default=True)
@click.option("--bits", default=7, show_default=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              help="Reuse calibrated parameters instead of computing them.")
@click.option("--output", required=True, type=click.Path())
@click.option("--params-out", type=click.Path())
@_guarded
def quantize(input, scheme, bits, params_path, output, params_out):
    """Quantize a float matrix to integers."""
    x = tensorio.load_matrix(input).data.astype(np.float64)
    if params_path is not None:
        p = _load_params(params_path)
        if p.scheme != "asymmetric":
            raise ValueError("reusable parameter files are asymmetric")
        q, p = quant.quantize_asymmetric(x, p.bit_width, params=p)
    elif scheme == "symmetric":
        q, p = quant.quantize_symmetric(x, bits)
    else:
        q, p = quant.quantize_asymmetric(x, bits)
    dtype = np.uint8 if p.scheme == "asymmetric" else np.int32
    tensorio.save_matrix(tensorio.Matrix(q.astype(dtype)), output)
    if params_out:
        Path(params_out).write_text(p.to_json() + "\n", encoding="utf-8")
    click.echo(f"wrote {output} ({p.scheme}, {p.bit_width}-bit, scale {p.scale:.6g})")


@main.command("slice")
@click.argument("input", type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["weight", "activation"]), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True), required=True)
@click.option("--output", required=True, type=click.Path())
@_guarded
def slice_cmd(input, kind, params_path, output):
    """Decompose a quantized matrix into 4-bit slice planes."""
    p = _load_params(params_path)
    q = tensorio.load_matrix(input).data.astype(np.int64)
    if kind == "weight":
        sm = slicing.slice_sbr(q, p.bit_width)
    else:
        sm = slicing.slice_activation(q, p)
    slicing.save_sliced(sm, output)
    click.echo(f"wrote {output}: {len(sm.planes)} planes, scheme {sm.scheme}")


@main.command()
@click.argument("input", type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["weight", "activation"]), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              help="Needed for the activation skip value; weights skip zero.")
@click.option("--output", required=True, type=click.Path())
@_guarded
def compress(input, kind, params_path, output):
    """Run-length encode the HO plane of a sliced matrix."""
    sm = slicing.load_sliced(input)
    if kind == "weight":
        orientation, r = rle.WEIGHT, 0
    else:
        if params_path is None:
            raise ValueError("--params is required for activation compression")
        orientation, r = rle.ACTIVATION, _load_params(params_path).skip_value
    cp = rle.compress_plane(sm.ho, orientation, r)
    Path(output).write_bytes(rle.to_bytes(cp))
    rho = 1 - cp.uncompressed_vector_count / cp.original_vector_count
    click.echo(
        f"wrote {output}: sparsity {rho:.3f}, "
        f"{rle.compressed_size_bytes(cp):.1f}B vs {rle.uncompressed_size_bytes(cp):.1f}B dense"
    )


@main.command("gemm")
@click.argument("weight", type=click.Path(exists=True))
@click.argument("activation", type=click.Path(exists=True))
@click.option("--params-w", required=True, type=click.Path(exists=True))
@click.option("--params-x", required=True, type=click.Path(exists=True))
@click.option("--bias", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice([gemm_mod.EQ5, gemm_mod.EQ6]), default=gemm_mod.EQ6,
              show_default=True)
@click.option("--verify", is_flag=True, help="Check both modes against the dense oracle.")
@click.option("--output", required=True, type=click.Path())
@click.option("--counters", "counters_path", type=click.Path())
@_guarded
def gemm(weight, activation, params_w, params_x, bias, mode, verify, output, counters_path):
    """Skipped bit-slice GEMM over quantized operand files."""
    pw = _load_params(params_w)
    px = _load_params(params_x)
    w = tensorio.load_matrix(weight).data.astype(np.int64)
    x = tensorio.load_matrix(activation).data.astype(np.int64)
    b = tensorio.load_matrix(bias).data.reshape(-1) if bias else None
    ops = gemm_mod.prepare_operands(w, x, pw, px, b)
    result = gemm_mod.aqs_gemm(ops, mode)
    if verify:
        other = gemm_mod.aqs_gemm(ops, gemm_mod.EQ5 if mode == gemm_mod.EQ6 else gemm_mod.EQ6)
        x_hat = slicing.reconstruct(ops.x)
        oracle = gemm_mod.dense_int_gemm_oracle(w, x_hat, np.zeros(w.shape[0], dtype=np.int64))
        for name, acc in (("dual-mode", other.acc), ("oracle", oracle)):
            if not np.array_equal(result.acc, acc):
                ix = np.argwhere(result.acc != acc)[0]
                click.echo(
                    f"verification failed ({name}) at ({ix[0]}, {ix[1]}): "
                    f"{result.acc[ix[0], ix[1]]} != {acc[ix[0], ix[1]]}",
                    err=True,
                )
                sys.exit(EXIT_VERIFY)
        click.echo("verification passed")
    tensorio.save_matrix(tensorio.Matrix(result.acc.astype(np.int32)), output)
    if counters_path:
        doc = {"mode": mode, "counters": result.counters.as_dict()}
        Path(counters_path).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    click.echo(f"wrote {output}")


@main.command()
@click.option("--m", default=64, show_default=True)
@click.option("--k", default=64, show_default=True)
@click.option("--n", default=64, show_default=True)
@click.option("--rho-w", default=0.75, show_default=True)
@click.option("--rho-x", default=0.875, show_default=True)
@click.option("--arch", type=click.Choice(sim.ARCHS), default="panacea", show_default=True)
@click.option("--mode", type=click.Choice([gemm_mod.EQ5, gemm_mod.EQ6]), default=gemm_mod.EQ6,
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Defaults to AQS_SEED or 0.")
@click.option("--output", required=True, type=click.Path())
@_guarded
def simulate(m, k, n, rho_w, rho_x, arch, mode, config_path, seed, output):
    """Model one synthetic layer on a chosen architecture."""
    seed = _default_seed() if seed is None else seed
    cfg = _load_hw(config_path)
    ops = sim.synthetic_operands(m, k, n, rho_w, rho_x, seed=seed)
    rep = sim.simulate_layer(ops, cfg, arch, mode, seed=seed)
    write_json([rep], cfg, seed, output)
    click.echo(
        f"{arch}: {rep.cycles} cycles, {rep.energy_pj:.1f} pJ, "
        f"dtp={'on' if rep.dtp_enabled else 'off'}"
    )


@main.command()
@click.option("--rho-w-grid", default="0,0.25,0.5,0.75,1", show_default=True)
@click.option("--rho-x-grid", default="0,0.25,0.5,0.75,1", show_default=True)
@click.option("--sizes", default="64x64x64", show_default=True,
              help="Semicolon-separated MxKxN problem sizes.")
@click.option("--archs", default=",".join(sim.ARCHS), show_default=True)
@click.option("--mode", type=click.Choice([gemm_mod.EQ5, gemm_mod.EQ6]), default=gemm_mod.EQ6,
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Defaults to AQS_SEED or 0.")
@click.option("--outdir", required=True, type=click.Path())
@_guarded
def sweep(rho_w_grid, rho_x_grid, sizes, archs, mode, config_path, seed, outdir):
    """Sparsity/size sweep; writes report.csv and report.json."""
    seed = _default_seed() if seed is None else seed
    cfg = _load_hw(config_path)
    arch_list = tuple(a.strip() for a in archs.split(",") if a.strip())
    for a in arch_list:
        if a not in sim.ARCHS:
            raise ValueError(f"unknown arch {a!r}")
    reports = sim.sweep(
        _floats(rho_w_grid), _floats(rho_x_grid), _sizes(sizes), cfg, arch_list, mode, seed
    )
    paths = write_report(reports, cfg, seed, outdir, figures=False)
    click.echo(f"wrote {', '.join(str(p) for p in paths)} ({len(reports)} entries)")


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True),
              help="Existing sweep report.json; omitted runs the default sweep.")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Defaults to AQS_SEED or 0.")
@click.option("--outdir", required=True, type=click.Path())
@_guarded
def report(input_path, config_path, seed, outdir):
    """Render CSV/JSON plus throughput, energy and sparsity figures."""
    from .report import load_json

    seed = _default_seed() if seed is None else seed
    if input_path is not None:
        reports, doc = load_json(input_path)
        cfg = HardwareConfig(**doc["config"])
        seed = doc.get("seed", seed)
    else:
        cfg = _load_hw(config_path)
        reports = sim.sweep(
            [0.0, 0.25, 0.5, 0.75, 1.0],
            [0.0, 0.25, 0.5, 0.75, 1.0],
            [(64, 64, 64)],
            cfg,
            sim.ARCHS,
            seed=seed,
        )
    paths = write_report(reports, cfg, seed, outdir, figures=True)
    click.echo(f"wrote {', '.join(str(p) for p in paths)}")


if __name__ == "__main__":
    main()
