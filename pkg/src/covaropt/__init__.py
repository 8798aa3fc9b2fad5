"""covaropt: systemic-risk (CoVaR) measurement and optimization for stock and
optioned portfolios.

Subpackages map to the pipeline stages: Gaussian market model and distress
conditioning (:mod:`~covaropt.market`), option contracts and pricing
(:mod:`~covaropt.instruments`), CoVaR engines (:mod:`~covaropt.risk`),
feasibility/seesaw diagnostics (:mod:`~covaropt.controllability`), the cone
program builder and embedded interior-point solver (:mod:`~covaropt.socp`),
GARCH/DCC estimation and simulation (:mod:`~covaropt.econometrics`), and the
backtesting engine (:mod:`~covaropt.backtest`).
"""

from .errors import (
    CovaroptError,
    DomainError,
    EstimationError,
    FactorizationError,
    InfeasibleSystemError,
    SingularSubmatrixError,
    SolverError,
)
from .market import (
    ConditionalLaw,
    DistressEvent,
    MarketModel,
    asset_var,
    conditional_law,
    normal_quantile,
)

__version__ = "0.1.0"
