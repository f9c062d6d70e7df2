"""Binary classifiers sharing one ``predict`` / ``predict_proba`` contract."""

from .base import Encoder, Model, predict, predict_proba
from .bayes import NaiveBayesModel, NbConfig, fit_nb
from .io import load_model, save_model
from .linear import (LinearSvmModel, LogisticConfig, LogisticModel, SvmConfig, fit_logistic,
                     fit_svm, logistic_loss_grad, svm_loss_grad)
from .mlp import MlpConfig, MlpModel, fit_mlp, mlp_loss_grad
from .trees import (DecisionTreeModel, ForestConfig, ForestModel, GbtConfig, GbtModel,
                    TreeConfig, TreeNode, fit_forest, fit_gbt, fit_tree)

__all__ = [
    "Encoder", "Model", "predict", "predict_proba", "load_model", "save_model",
    "NaiveBayesModel", "NbConfig", "fit_nb",
    "LogisticModel", "LogisticConfig", "fit_logistic", "logistic_loss_grad",
    "LinearSvmModel", "SvmConfig", "fit_svm", "svm_loss_grad",
    "MlpModel", "MlpConfig", "fit_mlp", "mlp_loss_grad",
    "DecisionTreeModel", "TreeConfig", "TreeNode", "fit_tree",
    "ForestModel", "ForestConfig", "fit_forest",
    "GbtModel", "GbtConfig", "fit_gbt",
]
