"""Command-line front end.

Subcommands cover the full pipeline: instance generation, risk
measurement, feasibility diagnostics, optimization and frontiers, scenario
tables, GARCH estimation and simulation, option pricing, and the weekly
backtest.  Figures are never drawn here: every analysis emits JSON or CSV
for external tooling.

Exit codes: 0 success, 1 domain/input error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import backtest as bt
from . import controllability as ctrl
from . import econometrics as econ
from . import risk, socp
from .errors import CovaroptError, DomainError, SolverError
from .instruments import (
    GbmDynamics,
    bs_price_and_greeks,
    finite_diff_greeks,
    garch_mc_price,
    generate_instance,
    load_options_csv,
    lsmc_american,
    OptionContract,
)
from .io import ProblemDocument, document_from_instance, problem_from_json, problem_to_json
from .market import DistressEvent, MarketModel, load_prices_csv, model_from_prices


def _out_path(args, name: str) -> Path:
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_document(args) -> ProblemDocument:
    return problem_from_json(Path(args.input).read_text())


def _omega_from_bounds(doc: ProblemDocument, scale: float = 1.0) -> socp.OmegaBounds:
    b = doc.bounds
    n = len(doc.contracts)
    ask = np.array([c.ask for c in doc.contracts])
    bid = np.array([c.bid for c in doc.contracts])
    m = doc.model.n_stocks
    return socp.OmegaBounds(
        k0=float(b.get("k0", 1.0)) * scale,
        x0=np.asarray(b.get("x0", np.zeros(n)), dtype=float),
        d_ask=ask, d_bid=bid,
        l_d=np.broadcast_to(np.asarray(b.get("l_d", 0.0), dtype=float), (n,)).copy(),
        u_d=np.broadcast_to(np.asarray(b.get("u_d", np.inf), dtype=float), (n,)).copy(),
        l_p=np.broadcast_to(np.asarray(b.get("l_p", 0.0), dtype=float), (m,)).copy(),
        u_p=np.broadcast_to(np.asarray(b.get("u_p", np.inf), dtype=float), (m,)).copy(),
        option_budget=b.get("option_budget"),
    )


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_gen_instance(args) -> int:
    inst = generate_instance(args.stocks, args.options, seed=args.seed,
                             rate=args.rate)
    event_stocks = None
    if args.event is not None:
        event_stocks = [int(s) for s in args.event.split(",")]
    doc = document_from_instance(inst, event_stocks=event_stocks, p_conf=args.p)
    path = _out_path(args, "instance.json")
    path.write_text(problem_to_json(doc))
    print(path)
    return 0


def cmd_covar(args) -> int:
    doc = _load_document(args)
    if not doc.events:
        raise DomainError("the document carries no distress event")
    if doc.portfolio is None:
        raise DomainError("the document carries no portfolio")
    event = doc.events[0]
    moments = risk.conditional_moments(doc.model, event, doc.greeks, doc.portfolio)
    spectral = risk.spectral_reform(doc.model, event, doc.greeks, doc.portfolio)
    mc, mc_se = risk.covar_mc_oracle(spectral, args.q, paths=args.paths,
                                     seed=args.seed, with_stderr=True)
    payload = {
        "mean": moments.mean,
        "variance": moments.variance,
        "covar_normal": risk.covar_normal_approx(moments, args.q),
        "covar_worst_case": risk.covar_worst_case(moments, args.q),
        "covar_mc": mc,
        "covar_mc_stderr": mc_se,
        "dominance_ratio": spectral.dominance_ratio(),
    }
    if doc.portfolio.is_stock_only:
        payload["covar_stock_exact"] = risk.stock_covar(
            doc.model, event, doc.portfolio.y, args.q
        )
    print(json.dumps(payload, indent=2))
    return 0


def cmd_optimize(args) -> int:
    doc = _load_document(args)
    omega = _omega_from_bounds(doc)
    rho_bars = None
    if args.rho_bar is not None:
        rho_bars = [float(v) for v in str(args.rho_bar).split(",")]
        if len(rho_bars) == 1 and len(doc.events) > 1:
            rho_bars = rho_bars * len(doc.events)
    prog = socp.build_p1(doc.model, doc.events, doc.greeks, omega,
                         q_conf=args.q, sigma_bar=args.sigma_bar,
                         rho_bars=rho_bars or [None] * len(doc.events),
                         risk_mode=args.risk_mode.replace("-", "_"))
    sol = socp.solve(prog)
    n, m = len(doc.contracts), doc.model.n_stocks
    payload = {
        "status": sol.status,
        "objective": sol.objective,
        "stocks": sol.x[n:n + m].tolist(),
        "options": sol.x[:n].tolist(),
        "residuals": {"primal": sol.pres, "dual": sol.dres, "gap": sol.relgap},
        "iterations": sol.iterations,
    }
    path = _out_path(args, "solution.json")
    path.write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload, indent=2))
    return 0 if sol.optimal else 2


def cmd_frontier(args) -> int:
    doc = _load_document(args)
    if not doc.events:
        raise DomainError("frontier needs a distress event in the document")
    omega = _omega_from_bounds(doc)
    result = socp.frontier(doc.model, doc.events[:1], doc.greeks, omega,
                           q_conf=args.q, grid=args.grid,
                           risk_mode=args.risk_mode.replace("-", "_"))
    path = _out_path(args, "frontier.csv")
    _write_csv(path, ["rho_bar", "sigma_bar", "expected_return", "status"],
               result.as_rows())
    print(path)
    return 0


def cmd_feasibility(args) -> int:
    doc = _load_document(args)
    if not doc.events:
        raise DomainError("feasibility needs a distress event in the document")
    report = ctrl.prop1_bounds(doc.model, doc.events[0], args.q,
                               rho_bar=args.rho_bar)
    payload = {
        "bound_distressed": report.bound_distressed,
        "bound_survivors": report.bound_survivors,
        "threshold": report.threshold,
        "witness": report.witness.tolist(),
        "rho_bar": report.rho_query,
        "infeasible": report.infeasible,
    }
    print(json.dumps(payload, indent=2))
    return 0


def cmd_seesaw(args) -> int:
    rows = []
    for s22 in np.geomspace(args.sigma22_min, args.sigma22_max, args.grid):
        cov = args.rho * math.sqrt(args.sigma11 * s22)
        model = MarketModel(np.ones(2), np.array([args.mu1, args.mu2]),
                            np.array([[args.sigma11, cov], [cov, s22]]), 1 / 52)
        coeffs = ctrl.seesaw_coefficients(model, args.p, args.q)
        rows.append((s22, coeffs.slope_distress_first,
                     coeffs.slope_distress_second, coeffs.product,
                     int(coeffs.seesaw)))
    path = _out_path(args, "seesaw.csv")
    _write_csv(path, ["sigma22", "slope1", "slope2", "product", "seesaw"], rows)
    print(path)
    return 0


def cmd_contagion(args) -> int:
    rows = ctrl.contagion_surface(args.p, args.q,
                                  rho_grid=np.linspace(0, 1, args.grid),
                                  loss_grid=None, variance=args.variance)
    path = _out_path(args, "contagion.csv")
    _write_csv(path, ["rho", "loss", "covar"], rows)
    print(path)
    return 0


def cmd_scenario(args) -> int:
    doc = _load_document(args)
    if not doc.events or doc.portfolio is None:
        raise DomainError("scenario needs an event and a portfolio")
    rows = bt.scenario_sweep(doc.model, doc.events[0], doc.greeks,
                             [("portfolio", doc.portfolio)])
    path = _out_path(args, "scenario.csv")
    _write_csv(path, ["lambda", "portfolio", "value"], rows)
    print(path)
    return 0


def cmd_estimate_garch(args) -> int:
    frame = pd.read_csv(args.input, index_col=0)
    returns = frame.to_numpy(dtype=float)
    fits = [econ.fit_gjr(returns[:, i], rate=args.rate)
            for i in range(returns.shape[1])]
    eps = np.column_stack([
        econ.gjr_filter(returns[:, i], fits[i].spec)[1]
        for i in range(returns.shape[1])
    ])
    sigma = np.column_stack([
        econ.gjr_filter(returns[:, i], fits[i].spec)[0]
        for i in range(returns.shape[1])
    ])
    dcc_fit = econ.fit_dcc(eps, sigma)
    payload = {
        "rate": args.rate,
        "marginals": [
            {
                "ticker": str(col),
                "alpha0": f.spec.alpha0, "alpha1": f.spec.alpha1,
                "alpha2": f.spec.alpha2, "alpha3": f.spec.alpha3,
                "kappa": f.spec.kappa, "loglik": f.loglik,
                "stderr": f.stderr.tolist(), "converged": f.converged,
            }
            for col, f in zip(frame.columns, fits)
        ],
        "dcc": {
            "beta1": dcc_fit.spec.beta1, "beta2": dcc_fit.spec.beta2,
            "c_bar": dcc_fit.spec.c_bar.tolist(),
            "stderr": dcc_fit.stderr.tolist(),
        },
    }
    path = _out_path(args, "garch.json")
    path.write_text(json.dumps(payload, indent=2))
    print(path)
    return 0


def _specs_from_json(payload) -> tuple[list[econ.GarchSpec], econ.DccSpec]:
    rate = float(payload["rate"])
    specs = [
        econ.GarchSpec(alpha0=e["alpha0"], alpha1=e["alpha1"], alpha2=e["alpha2"],
                       alpha3=e["alpha3"], kappa=e["kappa"], rate=rate)
        for e in payload["marginals"]
    ]
    dcc = econ.DccSpec(beta1=payload["dcc"]["beta1"],
                       beta2=payload["dcc"]["beta2"],
                       c_bar=np.asarray(payload["dcc"]["c_bar"], dtype=float))
    return specs, dcc


def cmd_simulate(args) -> int:
    payload = json.loads(Path(args.input).read_text())
    specs, dcc = _specs_from_json(payload)
    sigma1 = np.array([s.unconditional_variance for s in specs])
    simulate = econ.simulate_risk_neutral if args.risk_neutral \
        else econ.simulate_physical
    paths = simulate(specs, dcc, sigma1, np.array(dcc.c_bar),
                     steps=args.weeks, paths=args.paths, seed=args.seed)
    rows = []
    for p in range(args.paths):
        for t in range(args.weeks):
            rows.append([p, t] + [float(v) for v in paths[p, t]])
    path = _out_path(args, "paths.csv")
    header = ["path", "week"] + [e["ticker"] for e in payload["marginals"]]
    _write_csv(path, header, rows)
    print(path)
    return 0


def cmd_price_options(args) -> int:
    model = MarketModel.from_json(Path(args.model).read_text())
    labels = model.labels or tuple(str(i) for i in range(model.n_stocks))
    contracts, frame = load_options_csv(args.input, labels, min_bid=args.min_bid)
    ann_vol = np.sqrt(np.diag(model.sigma) / model.dt) / model.prices
    garch_payload = None
    if args.garch_spec:
        garch_payload = json.loads(Path(args.garch_spec).read_text())
    entries = []
    for contract in contracts:
        u = contract.underlying
        spot = float(model.prices[u])
        if args.pricer == "bs":
            price, delta, gamma, theta = bs_price_and_greeks(
                spot, contract.strike, float(ann_vol[u]), args.rate,
                contract.expiry, contract.kind,
            )
        elif args.pricer == "lsmc":
            dyn = GbmDynamics(spot=spot, rate=args.rate, vol=float(ann_vol[u]))

            def pricer(s, t, c=contract, v=float(ann_vol[u])):
                scaled = OptionContract(
                    underlying=c.underlying, kind=c.kind,
                    exercise_style=c.exercise_style, strike=c.strike, expiry=t,
                )
                return lsmc_american(args.paths, 5,
                                     GbmDynamics(s, args.rate, v), scaled,
                                     seed=args.seed)

            price = pricer(spot, contract.expiry)
            gset = finite_diff_greeks(pricer, contract, model.n_stocks, spot)
            delta = gset.delta[u]
            gamma = gset.gamma[u, u]
            theta = gset.theta
        else:  # garch-mc
            if garch_payload is None:
                raise DomainError("garch-mc pricing needs --garch-spec")
            specs, _ = _specs_from_json(garch_payload)
            spec = specs[u]

            def pricer(s, t, c=contract, spec=spec):
                scaled = OptionContract(
                    underlying=c.underlying, kind=c.kind,
                    exercise_style=c.exercise_style, strike=c.strike, expiry=t,
                )
                return garch_mc_price(scaled, spec, s,
                                      spec.unconditional_variance,
                                      paths=args.paths, seed=args.seed)

            price = pricer(spot, contract.expiry)
            gset = finite_diff_greeks(pricer, contract, model.n_stocks, spot)
            delta = gset.delta[u]
            gamma = gset.gamma[u, u]
            theta = gset.theta
        entries.append({
            "ticker": labels[u], "kind": contract.kind,
            "strike": contract.strike, "expiry": contract.expiry,
            "price": price, "delta": delta, "gamma": gamma, "theta": theta,
        })
    path = _out_path(args, "options_priced.json")
    path.write_text(json.dumps(entries, indent=2))
    print(path)
    return 0


class CsvFeed:
    """Backtest feed from a price CSV and a per-week options CSV."""

    def __init__(self, prices: pd.DataFrame, options: pd.DataFrame | None,
                 backtest_weeks: int, rate: float):
        self.rate = rate
        values = prices.to_numpy(dtype=float)
        self.log_returns = np.diff(np.log(values), axis=0)
        self.values = values
        self.start = values.shape[0] - backtest_weeks - 1
        if self.start < 210:
            raise DomainError("price history too short for weekly estimation")
        self.labels = [str(c) for c in prices.columns]
        self.option_rows = None
        if options is not None:
            options = options.copy()
            options["date"] = pd.to_datetime(options["date"])
            self.option_rows = dict(tuple(options.groupby("date")))
            self.dates = list(prices.index)
        self._epochs: dict[int, int] = {}

    def week(self, week: int) -> bt.WeekData:
        t_idx = self.start + week
        contracts: list = []
        greeks: list = []
        epoch = 0
        if self.option_rows is not None:
            date = self.dates[t_idx]
            frame = self.option_rows.get(pd.to_datetime(date))
            if frame is None:
                raise DomainError(f"no option rows for week {week} ({date})")
            index_of = {t: i for i, t in enumerate(self.labels)}
            key = tuple(sorted(zip(frame["ticker"], frame["strike"],
                                   frame["expiry"])))
            epoch = self._epochs.setdefault(key, len(self._epochs))
            from .instruments import GreekSet

            for _, row in frame.iterrows():
                u = index_of[str(row["ticker"])]
                contracts.append(OptionContract(
                    underlying=u, kind=str(row["kind"]).lower(),
                    exercise_style=str(row.get("style", "european")).lower(),
                    strike=float(row["strike"]), expiry=float(row["expiry"]),
                    bid=float(row["bid"]), ask=float(row["ask"]),
                ))
                greeks.append(GreekSet.single(
                    u, len(self.labels), float(row["delta"]),
                    float(row["gamma"]), float(row["theta"]),
                ))
        return bt.WeekData(
            week=week,
            prices=self.values[t_idx].copy(),
            returns_history=self.log_returns[:t_idx].copy(),
            contracts=tuple(contracts),
            greeks=tuple(greeks),
            menu_epoch=epoch,
        )


def cmd_backtest(args) -> int:
    prices = load_prices_csv(args.prices)
    options = pd.read_csv(args.options) if args.options else None
    strategy_payload = json.loads(Path(args.strategy).read_text())
    strategy = bt.Strategy(**strategy_payload)
    feed = CsvFeed(prices, options, backtest_weeks=args.weeks, rate=args.rate)
    report = bt.run_backtest(strategy, feed, weeks=args.weeks,
                             costs=args.costs,
                             p_conf=args.p, q_conf=args.q,
                             estimate_every=args.estimate_every)
    report_path = _out_path(args, "report.json")
    report_path.write_text(json.dumps({
        "metrics": report.metrics.as_dict(),
        "max_drawdown": report.max_drawdown,
        "infeasible_weeks": list(report.infeasible_weeks),
        "final_value": float(report.values[-1]),
    }, indent=2))
    _write_csv(_out_path(args, "values.csv"), ["week", "value"],
               list(enumerate(report.values)))
    counts, edges = np.histogram(report.returns, bins=20)
    _write_csv(_out_path(args, "histogram.csv"),
               ["bin_left", "bin_right", "count"],
               [(edges[i], edges[i + 1], int(counts[i]))
                for i in range(len(counts))])
    print(report_path)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covaropt",
        description="Systemic-risk measurement and optimization for stock "
                    "and optioned portfolios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_input=True):
        p.add_argument("--p", type=float, default=0.95,
                       help="VaR confidence level")
        p.add_argument("--q", type=float, default=0.95,
                       help="systemic-risk confidence level")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        if model_input:
            p.add_argument("--input", required=True,
                           help="problem document JSON")

    p = sub.add_parser("gen-instance", help="simulate a market instance")
    common(p, model_input=False)
    p.add_argument("--stocks", type=int, required=True)
    p.add_argument("--options", type=int, required=True)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--event", default=None,
                   help="comma-separated distressed stock indices")
    p.set_defaults(handler=cmd_gen_instance)

    p = sub.add_parser("covar", help="systemic risk of a portfolio")
    common(p)
    p.add_argument("--paths", type=int, default=100000)
    p.set_defaults(handler=cmd_covar)

    p = sub.add_parser("optimize", help="solve the risk-constrained program")
    common(p)
    p.add_argument("--sigma-bar", type=float, default=None)
    p.add_argument("--rho-bar", default=None,
                   help="risk bound (comma list for multiple events)")
    p.add_argument("--risk-mode", choices=["normal", "worst-case"],
                   default="normal")
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("frontier", help="return surface over the risk grid")
    common(p)
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--risk-mode", choices=["normal", "worst-case"],
                   default="normal")
    p.set_defaults(handler=cmd_frontier)

    p = sub.add_parser("feasibility", help="closed-form uncontrollability test")
    common(p)
    p.add_argument("--rho-bar", type=float, default=None)
    p.set_defaults(handler=cmd_feasibility)

    p = sub.add_parser("seesaw", help="two-stock slope-product scan")
    common(p, model_input=False)
    p.add_argument("--sigma11", type=float, default=0.01)
    p.add_argument("--sigma22-min", type=float, default=1e-4)
    p.add_argument("--sigma22-max", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--mu1", type=float, default=0.0)
    p.add_argument("--mu2", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=51)
    p.set_defaults(handler=cmd_seesaw)

    p = sub.add_parser("contagion", help="two-stock risk surface")
    common(p, model_input=False)
    p.add_argument("--variance", type=float, default=0.01)
    p.add_argument("--grid", type=int, default=51)
    p.set_defaults(handler=cmd_contagion)

    p = sub.add_parser("scenario", help="depression-to-boom value table")
    common(p)
    p.set_defaults(handler=cmd_scenario)

    p = sub.add_parser("estimate-garch", help="fit marginals and correlation")
    common(p, model_input=False)
    p.add_argument("--input", required=True, help="returns CSV")
    p.add_argument("--rate", type=float, default=0.05)
    p.set_defaults(handler=cmd_estimate_garch)

    p = sub.add_parser("simulate", help="simulate fitted dynamics")
    common(p, model_input=False)
    p.add_argument("--input", required=True, help="garch spec JSON")
    p.add_argument("--weeks", type=int, default=52)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--risk-neutral", action="store_true")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("price-options", help="price an option menu")
    common(p, model_input=False)
    p.add_argument("--input", required=True, help="options CSV")
    p.add_argument("--model", required=True, help="market model JSON")
    p.add_argument("--pricer", choices=["bs", "lsmc", "garch-mc"],
                   default="bs")
    p.add_argument("--garch-spec", default=None)
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--min-bid", type=float, default=0.0)
    p.set_defaults(handler=cmd_price_options)

    p = sub.add_parser("backtest", help="weekly rebalanced strategy run")
    common(p, model_input=False)
    p.add_argument("--prices", required=True, help="close-price CSV")
    p.add_argument("--options", default=None, help="per-week option CSV")
    p.add_argument("--strategy", required=True, help="strategy JSON")
    p.add_argument("--weeks", type=int, required=True)
    p.add_argument("--costs", action="store_true")
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--estimate-every", type=int, default=1)
    p.set_defaults(handler=cmd_backtest)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except CovaroptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
