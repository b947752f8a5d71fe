"""Conv-LSTM price forecasting fused with news sentiment, in numpy."""

from .convlstm import ConvLstmModel, ConvLstmParams, TrainConfig, cell_forward, grad_check, train
from .fusion import FusionRecord, emit_corpus, fit_surrogate, time_map
from .metrics import compare_report, compute_metrics
from .seqlen import SearchConfig, search_optimal_length
from .sentiment import LexiconScorer, weighted_cumulative
from .synth import SynthConfig, generate
from .timeseries import OhlcvSeries, load_ohlcv, make_windows, zscore_apply, zscore_fit, zscore_invert

__version__ = "0.1.0"
