"""voterev: measure and mitigate vote-choice revelation in election reporting."""

__version__ = "0.1.0"
