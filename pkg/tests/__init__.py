# remfield tests
