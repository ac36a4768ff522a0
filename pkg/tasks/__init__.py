# Task generators and corpus pipeline
