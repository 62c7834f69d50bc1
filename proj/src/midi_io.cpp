#include "melo/midi_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <tuple>

#include <json.hpp>

namespace melo {

void validate(const Score& score) {
  IdSet seen;
  for (const Note& n : score.notes) {
    if (n.pitch < 0 || n.pitch > 127)
      throw ArgumentError("note pitch out of range: " + std::to_string(n.pitch));
    if (!(n.duration > 0.0))
      throw ArgumentError("note duration must be positive");
    if (n.onset < 0.0) throw ArgumentError("note onset must be non-negative");
    if (!seen.insert(n.id).second)
      throw ArgumentError("duplicate note id: " + std::to_string(n.id));
  }
  if (score.ticks_per_beat <= 0) throw ArgumentError("ticks_per_beat must be positive");
  if (score.melody_ids) {
    for (NoteId id : *score.melody_ids)
      if (!seen.count(id))
        throw ArgumentError("melody id not in score: " + std::to_string(id));
  }
}

namespace {

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() {
    need(1, "unexpected end of file");
    return bytes_[pos_++];
  }

  std::uint8_t peek() const {
    if (pos_ >= bytes_.size()) throw ParseError("unexpected end of file", pos_);
    return bytes_[pos_];
  }

  std::uint16_t u16() {
    need(2, "unexpected end of file");
    std::uint16_t v = (std::uint16_t(bytes_[pos_]) << 8) | bytes_[pos_ + 1];
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4, "unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  std::uint32_t varlen() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    throw ParseError("variable-length quantity longer than 4 bytes", pos_ - 4);
  }

  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) throw ParseError(what, pos_);
  }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct RawNote {
  int track;
  int pitch;
  std::int64_t on_tick;
  std::int64_t off_tick;
  std::size_t order;  // parse order, for deterministic tie-breaks
};

}  // namespace

Score parse_midi(std::span<const std::uint8_t> bytes, const ParseOptions& options) {
  ByteReader r(bytes);

  r.need(4, "truncated header");
  if (std::memcmp(bytes.data(), "MThd", 4) != 0) throw ParseError("bad SMF magic", 0);
  r.skip(4, "truncated header");
  std::uint32_t header_len = r.u32();
  if (header_len < 6) throw ParseError("SMF header too short", r.pos() - 4);
  std::size_t header_end = r.pos() + header_len;
  std::uint16_t format = r.u16();
  if (format > 1)
    throw ParseError("unsupported SMF format " + std::to_string(format), r.pos() - 2);
  std::uint16_t ntrks = r.u16();
  std::uint16_t division = r.u16();
  if (division & 0x8000) throw ParseError("SMPTE time division is not supported", r.pos() - 2);
  if (division == 0) throw ParseError("zero ticks per beat", r.pos() - 2);
  r.skip(header_end - r.pos(), "truncated header");

  if (options.melody_track && (*options.melody_track < 0 || *options.melody_track >= ntrks))
    throw ArgumentError("melody_track out of range: " + std::to_string(*options.melody_track));

  std::vector<RawNote> raw;
  std::size_t order = 0;

  for (int track = 0; track < ntrks; ++track) {
    r.need(4, "missing track chunk");
    std::size_t chunk_pos = r.pos();
    char tag[4];
    for (char& c : tag) c = char(r.u8());
    std::uint32_t chunk_len = r.u32();
    if (std::memcmp(tag, "MTrk", 4) != 0) {
      // Unknown chunk types are skipped per the SMF spec.
      r.skip(chunk_len, "truncated chunk");
      --track;
      continue;
    }
    std::size_t track_end = r.pos() + chunk_len;
    r.need(chunk_len, "truncated track chunk");

    // key: (channel << 8) | pitch -> (on_tick, byte offset of the note-on)
    std::map<int, std::pair<std::int64_t, std::size_t>> open;
    std::int64_t tick = 0;
    std::uint8_t running_status = 0;

    auto close_note = [&](int channel, int pitch, std::int64_t off_tick) {
      auto it = open.find((channel << 8) | pitch);
      if (it == open.end()) return;  // unmatched note-off, ignored
      bool percussion = channel == 9;
      if (!(options.drop_percussion && percussion))
        raw.push_back({track, pitch, it->second.first, off_tick, order++});
      open.erase(it);
    };

    while (r.pos() < track_end) {
      tick += r.varlen();
      std::size_t event_pos = r.pos();
      std::uint8_t status = r.peek();
      if (status & 0x80) {
        r.u8();
        if (status < 0xf0) running_status = status;
      } else {
        if (!(running_status & 0x80))
          throw ParseError("data byte without running status", event_pos);
        status = running_status;
      }

      if (status == 0xff) {  // meta event
        std::uint8_t type = r.u8();
        std::uint32_t len = r.varlen();
        r.skip(len, "truncated meta event");
        if (type == 0x2f) break;  // end of track
      } else if (status == 0xf0 || status == 0xf7) {  // sysex
        std::uint32_t len = r.varlen();
        r.skip(len, "truncated sysex event");
      } else {
        int kind = status >> 4;
        int channel = status & 0x0f;
        switch (kind) {
          case 0x9: {  // note on
            int pitch = r.u8() & 0x7f;
            int velocity = r.u8() & 0x7f;
            if (velocity == 0) {
              close_note(channel, pitch, tick);
            } else {
              // A second note-on at the same pitch/channel closes the
              // earlier note (last-on-wins).
              close_note(channel, pitch, tick);
              open[(channel << 8) | pitch] = {tick, event_pos};
            }
            break;
          }
          case 0x8: {  // note off
            int pitch = r.u8() & 0x7f;
            r.u8();  // release velocity
            close_note(channel, pitch, tick);
            break;
          }
          case 0xa:
          case 0xb:
          case 0xe:
            r.skip(2, "truncated channel event");
            break;
          case 0xc:
          case 0xd:
            r.skip(1, "truncated channel event");
            break;
          default:
            throw ParseError("unexpected status byte", event_pos);
        }
      }
    }

    if (!open.empty()) {
      std::size_t offset = open.begin()->second.second;
      for (const auto& [key, v] : open) offset = std::min(offset, v.second);
      throw ParseError("dangling note-on", offset);
    }
    if (r.pos() > track_end) throw ParseError("event ran past track chunk", chunk_pos);
    r.skip(track_end - r.pos(), "truncated track chunk");
  }

  Score score;
  score.ticks_per_beat = division;

  double tpb = double(division);
  struct Entry {
    Note note;
    int track;
    std::size_t order;
  };
  std::vector<Entry> entries;
  entries.reserve(raw.size());
  for (const RawNote& rn : raw) {
    std::int64_t off = std::max(rn.off_tick, rn.on_tick + 1);  // zero-length widened to 1 tick
    Note n;
    n.pitch = rn.pitch;
    n.onset = double(rn.on_tick) / tpb;
    n.duration = double(off - rn.on_tick) / tpb;
    entries.push_back({n, rn.track, rn.order});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.note.onset, a.note.pitch, a.order) <
           std::tie(b.note.onset, b.note.pitch, b.order);
  });

  IdSet melody;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].note.id = NoteId(i);
    score.notes.push_back(entries[i].note);
    if (options.melody_track && entries[i].track == *options.melody_track)
      melody.insert(NoteId(i));
  }
  if (options.melody_track) score.melody_ids = melody;
  return score;
}

namespace {

void push_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v & 0xff));
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

void push_varlen(std::vector<std::uint8_t>& out, std::int64_t v) {
  std::uint8_t buf[5];
  int n = 0;
  do {
    buf[n++] = std::uint8_t(v & 0x7f);
    v >>= 7;
  } while (v > 0);
  for (int i = n - 1; i >= 0; --i) out.push_back(std::uint8_t(buf[i] | (i > 0 ? 0x80 : 0)));
}

struct MidiEvent {
  std::int64_t tick;
  int order;  // note-offs before note-ons at the same tick
  std::uint8_t status, d1, d2;
};

// One track chunk from the given notes. Overlapping notes of equal pitch are
// spread over channels so note-on/off pairs stay unambiguous.
std::vector<std::uint8_t> build_track(const std::vector<const Note*>& notes, int tpb) {
  std::vector<MidiEvent> events;
  struct OpenNote {
    double end;
    int pitch;
    int channel;
  };

  std::vector<const Note*> sorted = notes;
  std::sort(sorted.begin(), sorted.end(), [](const Note* a, const Note* b) {
    return std::tie(a->onset, a->pitch, a->id) < std::tie(b->onset, b->pitch, b->id);
  });

  std::vector<OpenNote> open;
  for (const Note* n : sorted) {
    open.erase(std::remove_if(open.begin(), open.end(),
                              [&](const OpenNote& o) { return o.end <= n->onset; }),
               open.end());
    int channel = 0;
    for (int c = 0; c < 16; ++c) {
      if (c == 9) continue;  // general MIDI percussion channel
      bool busy = false;
      for (const OpenNote& o : open)
        if (o.channel == c && o.pitch == n->pitch) busy = true;
      if (!busy) {
        channel = c;
        break;
      }
    }
    open.push_back({n->end(), n->pitch, channel});

    std::int64_t on_tick = std::int64_t(std::llround(n->onset * tpb));
    std::int64_t off_tick = std::max(std::int64_t(std::llround(n->end() * tpb)), on_tick + 1);
    events.push_back({on_tick, 1, std::uint8_t(0x90 | channel), std::uint8_t(n->pitch), 64});
    events.push_back({off_tick, 0, std::uint8_t(0x80 | channel), std::uint8_t(n->pitch), 0});
  }

  std::stable_sort(events.begin(), events.end(), [](const MidiEvent& a, const MidiEvent& b) {
    return std::tie(a.tick, a.order) < std::tie(b.tick, b.order);
  });

  std::vector<std::uint8_t> data;
  std::int64_t tick = 0;
  for (const MidiEvent& e : events) {
    push_varlen(data, e.tick - tick);
    tick = e.tick;
    data.push_back(e.status);
    data.push_back(e.d1);
    data.push_back(e.d2);
  }
  push_varlen(data, 0);
  data.push_back(0xff);
  data.push_back(0x2f);
  data.push_back(0x00);
  return data;
}

}  // namespace

std::vector<std::uint8_t> write_outputs(const Score& score, const IdSet& predicted_ids,
                                        OutputFormat format, const NoteProbs* probabilities) {
  IdSet ids = score.note_ids();
  for (NoteId id : predicted_ids)
    if (!ids.count(id)) throw ArgumentError("predicted id not in score: " + std::to_string(id));

  if (format == OutputFormat::json) {
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const Note& n : score.notes) {
      nlohmann::ordered_json rec;
      rec["id"] = n.id;
      rec["pitch"] = n.pitch;
      rec["onset_beats"] = n.onset;
      rec["duration_beats"] = n.duration;
      rec["is_melody"] = predicted_ids.count(n.id) > 0;
      if (probabilities) {
        auto it = probabilities->find(n.id);
        if (it != probabilities->end()) rec["probability"] = it->second;
      }
      records.push_back(std::move(rec));
    }
    std::string text = records.dump(2);
    text.push_back('\n');
    return std::vector<std::uint8_t>(text.begin(), text.end());
  }

  std::vector<const Note*> melody, rest;
  for (const Note& n : score.notes)
    (predicted_ids.count(n.id) ? melody : rest).push_back(&n);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  push_u32(out, 6);
  push_u16(out, 1);  // format 1
  push_u16(out, 2);  // two tracks: melody, accompaniment
  push_u16(out, std::uint16_t(score.ticks_per_beat));
  for (const auto* track_notes : {&melody, &rest}) {
    std::vector<std::uint8_t> data = build_track(*track_notes, score.ticks_per_beat);
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    push_u32(out, std::uint32_t(data.size()));
    out.insert(out.end(), data.begin(), data.end());
  }
  return out;
}

IdSet read_melody_ids_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    if (!j.contains("melody_ids")) throw ArgumentError("melody JSON object lacks 'melody_ids'");
    arr = &j["melody_ids"];
  }
  if (!arr->is_array()) throw ArgumentError("melody JSON must be an id array");
  IdSet ids;
  for (const auto& v : *arr) ids.insert(v.get<NoteId>());
  return ids;
}

Score parse_midi_file(const std::string& path, const ParseOptions& options) {
  std::vector<std::uint8_t> bytes = read_file(path);
  return parse_midi(bytes, options);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open file: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace melo
