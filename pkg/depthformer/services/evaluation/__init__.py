"""
Evaluation and reporting package.
"""
from depthformer.services.evaluation.evaluator import evaluate, evaluate_predictions, run_ablation
