"""
Exception classes for the orca-rrt package.
"""


class FileLoadError(Exception):
    """Raised when there's an error loading an instance, solution or config file."""

    pass


class GeometryError(Exception):
    """Raised when a polygon or environment violates its geometric invariants."""

    pass


class InstanceError(Exception):
    """Raised when a problem instance violates its invariants."""

    def __init__(self, message, agent=None):
        if agent is not None:
            message = f"Agent {agent}: {message}"
        super().__init__(message)
        self.agent = agent


class NoPathError(Exception):
    """Raised when a single-agent shortest path is required but none exists."""

    def __init__(self, agent, start, goal):
        super().__init__(
            f"No collision-free path for agent {agent} "
            f"from ({start[0]:g}, {start[1]:g}) to ({goal[0]:g}, {goal[1]:g})."
        )
        self.agent = agent
        self.start = start
        self.goal = goal


class SamplingStarvationError(Exception):
    """Raised when the joint-state sampler keeps rejecting draws."""

    def __init__(self, rejections):
        super().__init__(
            f"Sampling starved after {rejections} rejected positions. "
            f"The agents likely cannot fit into the free space."
        )
        self.rejections = rejections


class GenerationTimeoutError(Exception):
    """Raised when the instance generator cannot place an agent."""

    def __init__(self, env_name, n_agents, radius, agent):
        super().__init__(
            f"Cannot generate instance for env '{env_name}' with {n_agents} agents "
            f"of radius {radius:g}: agent {agent} could not be placed."
        )
        self.env_name = env_name
        self.n_agents = n_agents
        self.radius = radius
        self.agent = agent


class TreeConsistencyError(Exception):
    """Raised when a planner tree audit finds inconsistent costs."""

    pass
