"""Hierarchical goal-conditioned planning for Sokoban, in numpy."""
from .sokoban import (ACTION_NAMES, BOX, DOWN, GOAL, LEFT, PLAYER, RIGHT, STOP, UP, WALL, PuzzleState,
                      Trajectory, apply_action, distance, is_solved, run_plan)
from .levels import (GeneratorParams, LevelSet, generate_level, generate_levels, make_targets,
                     parse_boxoban, read_level_file, serialize_level, write_level_file)
from .models import Ensemble, ModelConfig
from .hierarchy import LandmarkTree, PlanningProblem, capacity, flatten_plan, pl, pl0
from .search import ensemble_search, exhaustive_search, two_leg_search
from .training import IterationConfig, ReplayBuffer, Trainer, build_rows, train_iteration
from .evaluation import EvalReport, evaluate
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .render import render_landmarks

__version__ = "0.1.0"
