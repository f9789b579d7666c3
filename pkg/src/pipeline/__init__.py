from .config import (BuildSettings, InferenceSettings, load_config, load_endpoints,
                     build_settings, inference_settings)
from .report import (write_report, metrics_table, leaderboard_table, decrease_ratio_table,
                     plot_sweep)

__version__ = '0.1.0'
name = 'pipeline'
