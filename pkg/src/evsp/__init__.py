"""Chance-constrained electric bus scheduling with battery degradation."""

__version__ = "0.1.0"

from .instances import (CostParams, Depot, ChargingStation, EnergyPMF, Instance,
                        SoCPolicy, TravelMatrix, Trip, generate_instance,
                        read_instance, worst_case_projection, write_instance)
from .charging import ChargingFunction, default_charger
from .network import DepotGraph, build_all_graphs, build_graph, validate_graph
from .probability import SoCModel, init_distribution, propagate, schedule_probability
from .master import Column, MasterState
from .pricing import DualPrices, Label, PricingProblem, dominates, extend, solve_pricing
from .bnp import BranchAndPrice, Limits, Solution, solve
from .degradation import (Cycle, FadeReport, FadingParams, cycle_fade,
                          lifetime_years, monte_carlo_fade, split_cycles)
