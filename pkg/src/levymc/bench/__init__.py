"""Benchmark problems, independent oracles and convergence studies."""
from .oracles import FiniteDifferenceHJB, merton_put_oracle, symbol_oracle
from .problems import KEYS, BenchmarkProblem, get_problem, oracle_value, portfolio_F_closed_form
from .study import RateReport, fit_slope, run_convergence_study
