from airprice.learners.forest import Forest, feature_importances, fit_forest, predict_forest, predict_proba
from airprice.learners.linear import LinearModel, fit_ols, independent_columns, predict_linear
from airprice.learners.tree import HyperParams, Split, Tree, TreeNode, best_split, fit_tree

__all__ = [
    "Forest", "HyperParams", "LinearModel", "Split", "Tree", "TreeNode",
    "best_split", "feature_importances", "fit_forest", "fit_ols", "fit_tree",
    "independent_columns", "predict_forest", "predict_linear", "predict_proba",
]
