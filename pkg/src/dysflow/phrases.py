"""Built-in voice-assistant command phrases used by the synthetic generator.

The list is fixed so seeded corpora are reproducible. It is skewed the way
short assistant queries are: many "what ..." questions, a couple of
naturally repeated words ("had had"), digit words for the oh-as-zero rule,
and a median length of six tokens.
"""

DEFAULT_COMMANDS: tuple[str, ...] = (
    "what is the weather today",
    "what time is it right now",
    "what day is the recital this year",
    "what is the score of the game",
    "what song is playing right now",
    "what is on my calendar tomorrow",
    "what is seven times eight",
    "set a timer for seven minutes",
    "set an alarm for six thirty",
    "set the volume to five please",
    "add apples to my grocery list",
    "add milk and eggs to the list",
    "add bananas to the shopping list",
    "play my favorite playlist please",
    "play the next song in the queue",
    "call my brother on speaker phone",
    "send a message to my friend",
    "text my mom that i am running late",
    "remind me to water the plants",
    "remind me to call the dentist tomorrow",
    "turn on the living room lights",
    "turn off the kitchen lights please",
    "turn down the thermostat two degrees",
    "open the garage door for me",
    "find the lyrics to a song i like",
    "find out when the museum will open",
    "how far is the nearest gas station",
    "how long is the flight to denver",
    "when is the next bus downtown",
    "when does the coffee shop close today",
    "where is the closest pharmacy to me",
    "show me photos from last summer",
    "take a note about the meeting",
    "we had had many discussions about this",
    "i want a large coffee with milk",
    "i need a ride to work",
    "check the balance of my account",
    "double the recipe for pancakes please",
    "lower the volume by two points",
    "skip this song and play another",
    "make a list called weekend plans",
    "book a table for two at noon",
    "start a three minute meditation timer",
    "cancel my alarm for tomorrow morning",
    "read me the latest news headlines",
    "shuffle the queue and turn it up",
)
