# Commands package initialization
