"""Joint Value-at-Risk / Expected Shortfall forecasting with realized measures."""

from .data_io import DailyRecord, ForecastRecord, IntradayDay, SchemaError
from .likelihood import LogLik, al_loglik, composite_loglik
from .mcmc import (
    BlockLayout,
    Chain,
    McmcConfig,
    McmcResult,
    effective_sample_size,
    gelman_rubin,
    run_chains,
    run_mcmc,
)
from .measures import MeasureConfig, build_measure_series, rr, rv, scale, subsampled_rr, subsampled_rv
from .mle import CandidateBox, MlFit, NoFeasibleCandidateError, fit_ml
from .models import (
    DegenerateQuantileError,
    FilterOutput,
    InitPolicy,
    ModelFamily,
    ModelSpec,
    ParamVector,
    filter_paths,
    forecast_one,
)
from .forecasting import make_mcmc_estimator, make_ml_estimator, make_stub_estimator, rolling_forecast
from .scoring import (
    BacktestReport,
    McsResult,
    TestResult,
    al_log_score,
    backtest,
    cc_test,
    dq_test,
    mcs,
    quantile_loss,
    uc_test,
    vqr_test,
    vrate,
)
from .simulation import (
    DgpSpec,
    SimulatedPath,
    TruthRecord,
    es_var_ratio,
    map_truth,
    replication_study,
    simulate_dgp,
    simulate_market,
    true_gamma_ar,
    true_paths,
    truth_record,
)

__version__ = "0.1.0"
