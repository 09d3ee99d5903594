"""Query engines: approximate enumeration, exact oracles and the query runner."""
