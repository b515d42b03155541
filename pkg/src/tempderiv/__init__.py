"""Temperature weather derivatives: seasonal mean-reverting model, CAT/GDD
futures and options, basket futures, a Monte Carlo oracle and a yield
classifier."""
from .basket import CorrelationModel, basket_cat_futures, basket_gdd_futures, simulate_joint
from .ingest import DailySeries, load_csv, prepare_series
from .model import BetaCurve, ModelParams, calibrate, simulate
from .oracle import mc_price
from .pricing import ContractSpec, PriceReport, cat_futures, cat_option, gdd_futures, gdd_option, price
from .seasonal import SeasonalParams, decompose, fit_seasonal

__version__ = "0.1.0"

__all__ = [
    "BetaCurve", "ContractSpec", "CorrelationModel", "DailySeries", "ModelParams", "PriceReport",
    "SeasonalParams", "basket_cat_futures", "basket_gdd_futures", "calibrate", "cat_futures",
    "cat_option", "decompose", "fit_seasonal", "gdd_futures", "gdd_option", "load_csv", "mc_price",
    "prepare_series", "price", "simulate", "simulate_joint",
]
