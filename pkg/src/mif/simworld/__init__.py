from .generator import LABELS, generate_scenario, load_suite, write_suite
from .scenario import JitterModel, Scenario, SimParams, dumps_scenario, load_scenario, scenario_to_dict
from .world import RawDetection, TaskOutcome, World, adjudicate
