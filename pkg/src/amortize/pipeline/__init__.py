"""Data generation, training, direct optimization and evaluation."""
from .config import DATA_DEFAULTS, TrainConfig, worker_count
from .data import check_dataset, gen_dataset, task_for
from .evaluate import EvalReport, eval_obstacles, evaluate_path_method, evaluate_robot_method, time_inference
from .solve import DoResult, direct_optimize, do_method, encoder_method, identity_method
from .tasks import ArmTask, BallisticTask, FiberTask, TaskMismatch, get_task, robot_cost_batch
from .train import TrainingDiverged, TrainResult, train_decoder, train_direct_learning, train_encoder

__all__ = [
    "DATA_DEFAULTS",
    "TrainConfig",
    "worker_count",
    "check_dataset",
    "gen_dataset",
    "task_for",
    "EvalReport",
    "eval_obstacles",
    "evaluate_path_method",
    "evaluate_robot_method",
    "time_inference",
    "DoResult",
    "direct_optimize",
    "do_method",
    "encoder_method",
    "identity_method",
    "ArmTask",
    "BallisticTask",
    "FiberTask",
    "TaskMismatch",
    "get_task",
    "robot_cost_batch",
    "TrainingDiverged",
    "TrainResult",
    "train_decoder",
    "train_direct_learning",
    "train_encoder",
]
