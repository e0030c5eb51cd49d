#pragma once

#include <string>
#include <vector>

namespace dfd {

/// A labelled sound event inside one clip. offset > onset always.
struct Event {
  std::string clip_id;
  std::string label;
  double onset = 0.0;   // seconds
  double offset = 0.0;  // seconds
};

using EventList = std::vector<Event>;

/// Tab-separated event list with header `filename onset offset event_label`.
void write_events_tsv(const std::string& path, const EventList& events);
EventList read_events_tsv(const std::string& path);

}  // namespace dfd
