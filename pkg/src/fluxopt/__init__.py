"""Energy-optimal magnetizing current of an induction machine under load steps."""
