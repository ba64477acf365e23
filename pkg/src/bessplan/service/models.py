"""Wire formats: every request carries its own case data, so the server
holds no state and any response can be rebuilt into core objects."""
import numpy as np
from pydantic import BaseModel, Field

from ..dispatch import BatteryBid, BidSet, LmpVector
from ..network import Bus, Generator, Line, LoadSeries, PowerNetwork
from ..scheduling import BessCandidate, BessConfig, VariantSpec


class BusModel(BaseModel):
    id: int
    name: str | None = None


class LineModel(BaseModel):
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    limit_mw: float


class GeneratorModel(BaseModel):
    id: int
    bus: int
    cost: float
    pmin_mw: float = 0.0
    pmax_mw: float


class NetworkModel(BaseModel):
    buses: list[BusModel]
    lines: list[LineModel]
    generators: list[GeneratorModel]
    slack_bus: int | None = None

    def to_network(self) -> PowerNetwork:
        if self.slack_bus is not None:
            slack = self.slack_bus
        elif self.generators:
            slack = min(g.bus for g in self.generators)
        else:
            slack = min(b.id for b in self.buses)
        net = PowerNetwork(
            buses=tuple(Bus(b.id, b.name or "") for b in self.buses),
            lines=tuple(
                Line(l.id, l.from_bus, l.to_bus, l.reactance, l.limit_mw)
                for l in self.lines
            ),
            generators=tuple(
                Generator(g.id, g.bus, g.cost, g.pmin_mw, g.pmax_mw)
                for g in self.generators
            ),
            slack_bus=slack,
        )
        net.validate()
        return net

    @staticmethod
    def from_network(net: PowerNetwork) -> "NetworkModel":
        return NetworkModel(
            buses=[BusModel(id=b.id, name=b.name) for b in net.buses],
            lines=[
                LineModel(
                    id=l.id, from_bus=l.from_bus, to_bus=l.to_bus,
                    reactance=l.reactance, limit_mw=l.limit_mw,
                )
                for l in net.lines
            ],
            generators=[
                GeneratorModel(
                    id=g.id, bus=g.bus, cost=g.cost, pmin_mw=g.pmin, pmax_mw=g.pmax,
                )
                for g in net.generators
            ],
            slack_bus=net.slack_bus,
        )


class LoadSeriesModel(BaseModel):
    bus: int
    values: list[float]

    def to_series(self, period_hours: float) -> LoadSeries:
        return LoadSeries(
            bus=self.bus, values=np.asarray(self.values), period_hours=period_hours
        )


class BatteryBidModel(BaseModel):
    battery_id: int
    bus: int
    charge_price: list[float]
    discharge_price: list[float]
    charge_max: list[float]
    discharge_max: list[float]

    def to_bid(self) -> BatteryBid:
        horizon = len(self.charge_price)
        return BatteryBid(
            battery_id=self.battery_id,
            bus=self.bus,
            charge_price=np.asarray(self.charge_price),
            discharge_price=np.asarray(self.discharge_price),
            charge_min=np.zeros(horizon),
            charge_max=np.asarray(self.charge_max),
            discharge_min=np.zeros(horizon),
            discharge_max=np.asarray(self.discharge_max),
        )


class CandidateModel(BaseModel):
    id: int
    bus: int
    fixed_cost: float
    unit_cost: float
    kappa_c: float
    kappa_d: float
    soc_min: float = 0.0
    soc_max: float = 1.0
    eta_c: float = 1.0
    eta_d: float = 1.0
    initial_soc: float | None = None

    def to_candidate(self) -> BessCandidate:
        return BessCandidate(
            id=self.id, bus=self.bus, fixed_cost=self.fixed_cost,
            unit_cost=self.unit_cost, kappa_c=self.kappa_c, kappa_d=self.kappa_d,
            soc_min=self.soc_min, soc_max=self.soc_max,
            eta_c=self.eta_c, eta_d=self.eta_d, initial_soc=self.initial_soc,
        )

    @staticmethod
    def from_candidate(cand: BessCandidate) -> "CandidateModel":
        return CandidateModel(
            id=cand.id, bus=cand.bus, fixed_cost=cand.fixed_cost,
            unit_cost=cand.unit_cost, kappa_c=cand.kappa_c, kappa_d=cand.kappa_d,
            soc_min=cand.soc_min, soc_max=cand.soc_max,
            eta_c=cand.eta_c, eta_d=cand.eta_d, initial_soc=cand.initial_soc,
        )


class ConfigModel(BaseModel):
    installed: list[int] = Field(default_factory=list)
    capacity: dict[int, float] = Field(default_factory=dict)
    budget: float

    def to_config(self) -> BessConfig:
        return BessConfig(
            installed=tuple(self.installed),
            capacity=dict(self.capacity),
            budget=self.budget,
        )


class VariantModel(BaseModel):
    zero_fixed_cost: bool = False
    enforce_complementarity: bool = False

    def to_variant(self) -> VariantSpec:
        return VariantSpec(
            zero_fixed_cost=self.zero_fixed_cost,
            enforce_complementarity=self.enforce_complementarity,
        )


class LmpSeriesModel(BaseModel):
    bus: int
    values: list[float]


class PtdfRequest(BaseModel):
    network: NetworkModel


class PtdfResponse(BaseModel):
    line_ids: list[int]
    bus_ids: list[int]
    matrix: list[list[float]]


class DispatchRequest(BaseModel):
    network: NetworkModel
    loads: list[LoadSeriesModel]
    period_hours: float = 1.0
    bids: list[BatteryBidModel] = Field(default_factory=list)
    periods: list[int] | None = None

    def to_bids(self) -> BidSet:
        return BidSet(bids=tuple(b.to_bid() for b in self.bids))


class FlowSeriesModel(BaseModel):
    line: int
    values: list[float]


class DispatchResponse(BaseModel):
    total_cost: float
    periods: list[int]
    lmps: list[LmpSeriesModel]
    congestion: dict[int, float]
    flows: list[FlowSeriesModel]
    degenerate_duals: bool

    def to_lmps(self) -> LmpVector:
        return LmpVector(
            values=np.array([row.values for row in self.lmps]),
            bus_ids=tuple(row.bus for row in self.lmps),
            periods=tuple(self.periods),
        )


class PriceSeriesModel(BaseModel):
    id: int
    values: list[float]


class ScheduleRequest(BaseModel):
    catalog: list[CandidateModel]
    prices: list[PriceSeriesModel]
    budget: float
    period_hours: float = 1.0
    variant: VariantModel = Field(default_factory=VariantModel)
    fixed_config: ConfigModel | None = None


class PlanModel(BaseModel):
    id: int
    charge: list[float]
    discharge: list[float]
    soc: list[float]
    cashflow: list[float]


class ScheduleResponse(BaseModel):
    status: str
    objective: float
    investment: float
    installed: list[int]
    capacity: dict[int, float]
    plans: list[PlanModel]
    proven_optimal: bool
    nodes_explored: int


class AusParamsModel(BaseModel):
    epsilon: float = 1e-3
    max_iter: int = 10
    bid_margin: float = 0.05


class AusRequest(BaseModel):
    network: NetworkModel
    loads: list[LoadSeriesModel]
    catalog: list[CandidateModel]
    config: ConfigModel
    params: AusParamsModel = Field(default_factory=AusParamsModel)
    period_hours: float = 1.0
    periods: list[int] | None = None


class RoundModel(BaseModel):
    k: int
    delta: float | None
    iso_cost: float
    owner_cost: float
    lmp_mean_by_bus: dict[str, float]


class AusResponse(BaseModel):
    converged: bool
    iterations: int
    final_delta: float
    oscillation: bool
    rounds: list[RoundModel]
    lmps: list[LmpSeriesModel]
    periods: list[int]
    schedule: ScheduleResponse

    def to_lmps(self) -> LmpVector:
        return LmpVector(
            values=np.array([row.values for row in self.lmps]),
            bus_ids=tuple(row.bus for row in self.lmps),
            periods=tuple(self.periods),
        )


class HorizonModel(BaseModel):
    day_length: int = 24
    years: int = 1
    discount_rate: float = 0.05
    peak_fraction: float = 1.0
    days_per_year: int = 365


class SearchRequest(BaseModel):
    network: NetworkModel
    loads: list[LoadSeriesModel]
    catalog: list[CandidateModel]
    max_sites: int = 1
    budget: float
    capacity_range: tuple[float, float] | None = None
    horizon: HorizonModel = Field(default_factory=HorizonModel)
    params: AusParamsModel = Field(default_factory=AusParamsModel)
    method: str = "tpe"
    n_trials: int = 10
    seed: int = 0
    threads: int = 1
    period_hours: float = 1.0
    fixed_price: bool = False


class TrialModel(BaseModel):
    trial: int
    R: float | None = None  # None encodes the -inf of a failed trial
    installed: list[int]
    capacity: dict[int, float]
    budget: float
    scores: dict[int, float]
    failed: bool


class SearchResponse(BaseModel):
    trials: list[TrialModel]
    best_index: int
    comparison: dict[str, float] | None = None
