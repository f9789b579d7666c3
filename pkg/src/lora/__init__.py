from .layer import (LoraLayer, AdaptationTarget, RANK_GRID, init_layer,
                    random_layer, forward, merged_weight, param_count, param_report)
from .train import (TrainConfig, TrainResult, TOY_CONFIG, make_toy_dataset, train_toy,
                    grad_check, loss_and_gradients, random_sample, write_loss_csv,
                    write_grad_check_csv, write_param_report_csv)

__version__ = '0.1.0'
name = 'lora'
