from .dataset import Dataset, Frame, Scenario, generate_dataset, simulate_frame
