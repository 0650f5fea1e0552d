"""Training cost, energy and carbon arithmetic.

Defaults are back-derived from the published Llama-2 figures so that the
7B run (184,320 A100 GPU-hours) lands on 73,728 kWh / 31.22 tCO2eq and the
70B run (1,720,320 GPU-hours) on 688,128 kWh / 291.42 tCO2eq.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

DEFAULT_PRICE_USD_PER_GPU_HOUR = 1.0
DEFAULT_TDP_KW = 0.4
DEFAULT_CARBON_KG_PER_KWH = 0.4235

LLAMA2_7B_GPU_HOURS = 184_320
LLAMA2_70B_GPU_HOURS = 1_720_320


class CostError(ValueError):
    pass


def _positive(**kw: float) -> None:
    for name, v in kw.items():
        if not v > 0:
            raise CostError(f"{name} must be > 0, got {v!r}")


@dataclass(frozen=True)
class CostParams:
    price_usd_per_gpu_hour: float = DEFAULT_PRICE_USD_PER_GPU_HOUR
    tdp_kw: float = DEFAULT_TDP_KW
    carbon_kg_per_kwh: float = DEFAULT_CARBON_KG_PER_KWH

    def __post_init__(self):
        _positive(
            price_usd_per_gpu_hour=self.price_usd_per_gpu_hour,
            tdp_kw=self.tdp_kw,
            carbon_kg_per_kwh=self.carbon_kg_per_kwh,
        )


@dataclass(frozen=True)
class CostReport:
    gpu_hours: float
    usd: float
    kwh: float
    tco2eq: float

    def to_dict(self) -> dict:
        return asdict(self)


def energy_kwh(gpu_hours: float, tdp_kw: float) -> float:
    _positive(gpu_hours=gpu_hours, tdp_kw=tdp_kw)
    return gpu_hours * tdp_kw


def carbon_tco2(kwh: float, factor_kg_per_kwh: float) -> float:
    _positive(kwh=kwh, factor_kg_per_kwh=factor_kg_per_kwh)
    return kwh * factor_kg_per_kwh / 1000.0


def training_usd(gpu_hours: float, price: float) -> float:
    _positive(gpu_hours=gpu_hours, price=price)
    return gpu_hours * price


def cost_report(gpu_hours: float, params: CostParams = CostParams()) -> CostReport:
    kwh = energy_kwh(gpu_hours, params.tdp_kw)
    return CostReport(
        gpu_hours=float(gpu_hours),
        usd=training_usd(gpu_hours, params.price_usd_per_gpu_hour),
        kwh=kwh,
        tco2eq=carbon_tco2(kwh, params.carbon_kg_per_kwh),
    )


def breakeven_messages(model_bytes: int, core_bytes_per_exchange: int) -> int:
    """Edge-served exchanges needed before saved core bytes pay for one model transfer."""
    _positive(model_bytes=model_bytes, core_bytes_per_exchange=core_bytes_per_exchange)
    return -(-int(model_bytes) // int(core_bytes_per_exchange))
