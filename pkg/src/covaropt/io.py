"""The self-describing JSON problem document shared by the CLI subcommands.

One document carries the market model, distress events, the option menu
with Greeks, a portfolio, and admissible-set bounds; every field
round-trips losslessly so pipeline stages can be chained
(instance generation -> optimization -> analysis).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .instruments import GeneratedInstance, GreekSet, OptionContract
from .market import DistressEvent, MarketModel
from .risk import Portfolio


@dataclass
class ProblemDocument:
    """In-memory form of the interchange document."""

    model: MarketModel
    rate: float = 0.05
    events: list[DistressEvent] = field(default_factory=list)
    contracts: list[OptionContract] = field(default_factory=list)
    greeks: list[GreekSet] = field(default_factory=list)
    portfolio: Portfolio | None = None
    bounds: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def option_mid_prices(self) -> np.ndarray:
        return np.array([c.mid for c in self.contracts])


def _option_entry(contract: OptionContract, greek: GreekSet) -> dict:
    u = contract.underlying
    return {
        "underlying": u,
        "kind": contract.kind,
        "style": contract.exercise_style,
        "strike": contract.strike,
        "expiry": contract.expiry,
        "bid": contract.bid,
        "ask": contract.ask,
        "delta": float(greek.delta[u]),
        "gamma": float(greek.gamma[u, u]),
        "theta": float(greek.theta),
    }


def problem_to_json(doc: ProblemDocument) -> str:
    payload = {
        "model": json.loads(doc.model.to_json()),
        "rate": doc.rate,
        "events": [
            {"distressed": list(e.distressed), "p_conf": e.p_conf,
             "k": e.k.tolist()}
            for e in doc.events
        ],
        "options": [
            _option_entry(c, g) for c, g in zip(doc.contracts, doc.greeks)
        ],
        "bounds": doc.bounds,
    }
    if doc.portfolio is not None:
        payload["portfolio"] = {
            "stocks": doc.portfolio.y.tolist(),
            "options": doc.portfolio.x.tolist(),
        }
    if doc.seed is not None:
        payload["seed"] = doc.seed
    return json.dumps(payload, indent=2)


def problem_from_json(text: str) -> ProblemDocument:
    payload = json.loads(text)
    model = MarketModel.from_json(json.dumps(payload["model"]))
    m = model.n_stocks
    events = []
    for entry in payload.get("events", []):
        distressed = tuple(int(i) for i in entry["distressed"])
        complement = tuple(i for i in range(m) if i not in distressed)
        events.append(DistressEvent(
            distressed=distressed, complement=complement,
            k=np.asarray(entry["k"], dtype=float),
            p_conf=float(entry["p_conf"]),
        ))
    contracts, greeks = [], []
    for entry in payload.get("options", []):
        u = int(entry["underlying"])
        if not 0 <= u < m:
            raise DomainError(f"option underlying {u} outside the universe")
        contracts.append(OptionContract(
            underlying=u, kind=entry["kind"], exercise_style=entry["style"],
            strike=float(entry["strike"]), expiry=float(entry["expiry"]),
            bid=float(entry["bid"]), ask=float(entry["ask"]),
        ))
        greeks.append(GreekSet.single(
            u, m, float(entry["delta"]), float(entry["gamma"]),
            float(entry["theta"]),
        ))
    portfolio = None
    if "portfolio" in payload:
        portfolio = Portfolio(
            y=np.asarray(payload["portfolio"]["stocks"], dtype=float),
            x=np.asarray(payload["portfolio"]["options"], dtype=float),
        )
    return ProblemDocument(
        model=model,
        rate=float(payload.get("rate", 0.05)),
        events=events,
        contracts=contracts,
        greeks=greeks,
        portfolio=portfolio,
        bounds=payload.get("bounds", {}),
        seed=payload.get("seed"),
    )


def document_from_instance(
    inst: GeneratedInstance,
    event_stocks=None,
    p_conf: float = 0.95,
) -> ProblemDocument:
    events = []
    if event_stocks:
        events.append(DistressEvent.at_var(inst.model, event_stocks, p_conf))
    return ProblemDocument(
        model=inst.model,
        rate=inst.rate,
        events=events,
        contracts=list(inst.contracts),
        greeks=list(inst.greeks),
        portfolio=Portfolio(y=np.zeros(inst.model.n_stocks),
                            x=np.zeros(len(inst.contracts))),
        bounds={"k0": 1.0, "l_d": 0.0, "u_d": 0.15, "l_p": 0.0, "u_p": 0.15},
        seed=inst.seed,
    )
