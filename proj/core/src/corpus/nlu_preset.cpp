#include "dforge/corpus/nlu_gen.hpp"

namespace dforge::corpus {

namespace {

const std::vector<std::string> kHours = {"six", "seven", "eight", "nine", "ten"};
const std::vector<std::string> kTimesOfDay = {"morning", "noon", "evening",
                                              "night"};
const std::vector<std::string> kDays = {"monday", "tuesday", "wednesday",
                                        "friday", "saturday", "sunday"};
const std::vector<std::string> kCounts = {"one", "two",   "three", "four",
                                          "five", "six",  "seven", "eight",
                                          "nine", "ten"};
const std::vector<std::string> kPeople = {"anna",  "brian", "carla",
                                          "david", "elena", "frank"};
const std::vector<std::string> kRelations = {"mom", "dad", "grandma", "uncle"};
const std::vector<std::string> kCities = {"boston", "paris",  "tokyo",
                                          "berlin", "madrid", "dublin"};
const std::vector<std::string> kDevices = {"lamp",    "light",      "fan",
                                           "heater",  "speaker",    "radio",
                                           "television", "thermostat"};
const std::vector<std::string> kRooms = {"kitchen", "bedroom", "bathroom",
                                         "office",  "garage",  "hallway"};
const std::vector<std::string> kGenres = {"jazz", "rock", "blues", "folk",
                                          "pop"};
const std::vector<std::string> kSongs = {"sunny road", "blue river",
                                         "old town", "quiet night"};
const std::vector<std::string> kEvents = {"meeting", "dinner", "workout",
                                          "appointment", "birthday"};
const std::vector<std::string> kItems = {"batteries", "towels", "soap",
                                         "napkins", "candles"};
const std::vector<std::string> kFoods = {"pizza", "pasta", "salad",
                                         "soup",  "bread", "cheese"};
const std::vector<std::string> kDrinks = {"coffee", "tea", "milk", "juice",
                                          "water"};
const std::vector<std::string> kModes = {"red",  "blue",   "green", "warm",
                                         "cool", "bright", "dim"};
const std::vector<std::string> kDirections = {"up", "down"};
const std::vector<std::string> kWeather = {"rain", "snow", "wind", "fog",
                                           "sunshine"};
const std::vector<std::string> kLists = {"shopping", "grocery", "chores"};
const std::vector<std::string> kDurations = {"five minutes", "ten minutes",
                                             "one hour", "two hours"};
const std::vector<std::string> kBodies = {"happy birthday", "good luck",
                                          "see you soon", "running late"};

NluGrammar build_domain1() {
  NluGrammar grammar;
  grammar.language = "en";
  grammar.domain = "domain1";

  auto add = [&](const std::string& intent,
                 std::vector<std::string> templates,
                 std::vector<std::pair<std::string, const std::vector<std::string>*>>
                     slots) {
    grammar.intents.push_back({intent, std::move(templates)});
    for (auto& [name, pool] : slots) grammar.slots[name] = *pool;
  };

  add("set_alarm",
      {"set an alarm for {alarm_hour} in the {alarm_timeofday}",
       "wake me at {alarm_hour} on {alarm_day}",
       "set {alarm_count} alarms for the {alarm_label} on {alarm_day}",
       "set an alarm for {alarm_person} at {alarm_hour}",
       "i need an alarm for the {alarm_label} in the {alarm_timeofday}"},
      {{"alarm_hour", &kHours},
       {"alarm_timeofday", &kTimesOfDay},
       {"alarm_day", &kDays},
       {"alarm_label", &kEvents},
       {"alarm_count", &kCounts},
       {"alarm_person", &kPeople}});

  add("cancel_alarm",
      {"cancel the alarm at {cancel_hour} on {cancel_day}",
       "cancel my {cancel_label} alarm in the {cancel_timeofday}",
       "remove {cancel_count} alarms for {cancel_person}",
       "cancel the {cancel_timeofday} alarm at {cancel_hour}",
       "drop the alarm {cancel_person} set for {cancel_day}"},
      {{"cancel_hour", &kHours},
       {"cancel_timeofday", &kTimesOfDay},
       {"cancel_day", &kDays},
       {"cancel_label", &kEvents},
       {"cancel_count", &kCounts},
       {"cancel_person", &kPeople}});

  add("set_timer",
      {"set a timer for {timer_duration}",
       "start a {timer_label} timer for {timer_duration}",
       "run {timer_count} timers in the {timer_room}",
       "set a timer until {timer_hour} for {timer_person}",
       "put a {timer_duration} timer on in the {timer_room}"},
      {{"timer_duration", &kDurations},
       {"timer_label", &kEvents},
       {"timer_count", &kCounts},
       {"timer_hour", &kHours},
       {"timer_room", &kRooms},
       {"timer_person", &kPeople}});

  add("play_music",
      {"play some {music_genre} by {artist_name}",
       "play {song_name} on the {playback_device}",
       "play {music_genre} in the {music_room}",
       "put on the playlist from {playlist_owner} for {music_day}",
       "play {song_name} by {artist_name} on the {playback_device}"},
      {{"artist_name", &kPeople},
       {"music_genre", &kGenres},
       {"song_name", &kSongs},
       {"playback_device", &kDevices},
       {"music_room", &kRooms},
       {"playlist_owner", &kPeople},
       {"music_day", &kDays}});

  add("stop_music",
      {"stop the music on the {stop_device}",
       "stop playing {stop_genre} in the {stop_room}",
       "stop {stop_song} please",
       "turn the music off for {stop_owner}",
       "silence the {stop_device} in the {stop_room}"},
      {{"stop_device", &kDevices},
       {"stop_room", &kRooms},
       {"stop_genre", &kGenres},
       {"stop_song", &kSongs},
       {"stop_owner", &kPeople}});

  add("adjust_volume",
      {"turn the volume {volume_direction} to {volume_level}",
       "set the {volume_device} volume to {volume_level}",
       "turn it {volume_direction} in the {volume_room}",
       "lower the volume for {volume_owner}",
       "raise the {volume_device} in the {volume_room}"},
      {{"volume_level", &kCounts},
       {"volume_device", &kDevices},
       {"volume_room", &kRooms},
       {"volume_direction", &kDirections},
       {"volume_owner", &kPeople}});

  add("turn_on_device",
      {"turn on the {on_device} in the {on_room}",
       "switch the {on_device} to {on_color}",
       "set the {on_device} to level {on_level}",
       "turn on the {on_device} at {on_hour}",
       "power up the {on_device} in the {on_timeofday}"},
      {{"on_device", &kDevices},
       {"on_room", &kRooms},
       {"on_color", &kModes},
       {"on_level", &kCounts},
       {"on_hour", &kHours},
       {"on_timeofday", &kTimesOfDay}});

  add("turn_off_device",
      {"turn off the {off_device} in the {off_room}",
       "switch off the {off_device} at {off_hour}",
       "shut the {off_device} down in the {off_timeofday}",
       "turn off {off_count} lights on {off_day}",
       "power down the {off_device} on {off_day}"},
      {{"off_device", &kDevices},
       {"off_room", &kRooms},
       {"off_hour", &kHours},
       {"off_timeofday", &kTimesOfDay},
       {"off_day", &kDays},
       {"off_count", &kCounts}});

  add("set_temperature",
      {"set the temperature to {temp_level} in the {temp_room}",
       "make the {temp_room} {temp_mode}",
       "set the heat to {temp_level} at {temp_hour}",
       "keep it {temp_mode} in the {temp_timeofday}",
       "set {temp_level} degrees for {temp_day}"},
      {{"temp_level", &kCounts},
       {"temp_room", &kRooms},
       {"temp_mode", &kModes},
       {"temp_hour", &kHours},
       {"temp_timeofday", &kTimesOfDay},
       {"temp_day", &kDays}});

  add("get_weather",
      {"what is the weather in {weather_city} on {weather_day}",
       "will there be {weather_aspect} in {weather_city}",
       "how is the {weather_timeofday} weather for the {weather_event}",
       "is {weather_aspect} expected on {weather_day}",
       "weather for {weather_city} in the {weather_timeofday}"},
      {{"weather_city", &kCities},
       {"weather_day", &kDays},
       {"weather_timeofday", &kTimesOfDay},
       {"weather_aspect", &kWeather},
       {"weather_event", &kEvents}});

  add("add_to_list",
      {"add {list_item} to the {list_name} list",
       "put {list_count} {list_item} on the {list_name} list",
       "add {list_item} for {list_person}",
       "add {list_item} to the list for {list_day}",
       "put {list_item} on my {list_name} list please"},
      {{"list_item", &kItems},
       {"list_name", &kLists},
       {"list_count", &kCounts},
       {"list_person", &kPeople},
       {"list_day", &kDays}});

  add("remove_from_list",
      {"remove {remove_item} from the {remove_list} list",
       "take {remove_count} {remove_item} off the {remove_list} list",
       "remove {remove_item} for {remove_person}",
       "drop {remove_item} from the list for {remove_day}",
       "take {remove_item} off my {remove_list} list"},
      {{"remove_item", &kItems},
       {"remove_list", &kLists},
       {"remove_count", &kCounts},
       {"remove_person", &kPeople},
       {"remove_day", &kDays}});

  add("make_call",
      {"call {call_contact} in {call_city}",
       "call my {call_relation} at {call_hour}",
       "call {call_contact} on the {call_device}",
       "make a call to {call_contact} on {call_day}",
       "call {call_contact} in the {call_timeofday}",
       "ring my {call_relation} in {call_city}"},
      {{"call_contact", &kPeople},
       {"call_city", &kCities},
       {"call_device", &kDevices},
       {"call_hour", &kHours},
       {"call_timeofday", &kTimesOfDay},
       {"call_day", &kDays},
       {"call_relation", &kRelations}});

  add("send_message",
      {"send a message to {message_contact} saying {message_body}",
       "text {message_contact} in {message_city}",
       "message my {message_relation} about {message_body}",
       "send {message_contact} a note on {message_day}",
       "text {message_contact} at {message_hour}"},
      {{"message_contact", &kPeople},
       {"message_body", &kBodies},
       {"message_city", &kCities},
       {"message_day", &kDays},
       {"message_hour", &kHours},
       {"message_relation", &kRelations}});

  add("create_reminder",
      {"remind me about the {reminder_event} on {reminder_day}",
       "remind me at {reminder_hour} in the {reminder_timeofday}",
       "set a reminder for {reminder_person} about the {reminder_event}",
       "remind me about the {reminder_event} in {reminder_city}",
       "set {reminder_count} reminders for {reminder_day}"},
      {{"reminder_event", &kEvents},
       {"reminder_day", &kDays},
       {"reminder_hour", &kHours},
       {"reminder_timeofday", &kTimesOfDay},
       {"reminder_person", &kPeople},
       {"reminder_city", &kCities},
       {"reminder_count", &kCounts}});

  add("order_food",
      {"order {order_count} {order_food} to the {order_room}",
       "order {order_food} and {order_drink} for {order_person}",
       "get me {order_food} from {order_city}",
       "order {order_drink} at {order_hour} on {order_day}",
       "order {order_food} for the {order_event}",
       "get {order_item} and {order_drink} delivered to the {order_room}"},
      {{"order_food", &kFoods},
       {"order_drink", &kDrinks},
       {"order_count", &kCounts},
       {"order_city", &kCities},
       {"order_person", &kPeople},
       {"order_hour", &kHours},
       {"order_day", &kDays},
       {"order_event", &kEvents},
       {"order_item", &kItems},
       {"order_room", &kRooms}});

  validate_grammar(grammar);
  return grammar;
}

}  // namespace

NluGrammar grammar_preset(const std::string& name) {
  if (name == "domain1-like") {
    static const NluGrammar grammar = build_domain1();
    return grammar;
  }
  throw ConfigError("unknown grammar preset '" + name + "'");
}

}  // namespace dforge::corpus
