#include "iogvqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "iogvqa/errors.hpp"

namespace iog {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'I', 'O', 'G', 'V'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw IntegrityError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string adam_key(const std::string& opt, const char* kind, const std::string& param) {
  return "adam." + opt + "." + kind + "." + param;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const nlohmann::json header{
      {"config", ckpt.config.to_json()},
      {"config_fingerprint", ckpt.config.fingerprint()},
      {"shape_fingerprint", ckpt.config.shape_fingerprint()},
      {"dims",
       {{"word_vocab", ckpt.dims.word_vocab},
        {"char_vocab", ckpt.dims.char_vocab},
        {"answers", ckpt.dims.answers},
        {"object_dim", ckpt.dims.object_dim}}},
      {"vocab_fingerprint", ckpt.vocab_fingerprint},
      {"epoch", ckpt.epoch},
      {"best_score", ckpt.best_score},
      {"tensors", ckpt.tensors.size()}};
  const std::string h = header.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const NamedTensor& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint64_t>(out, t.value.rows());
    put<std::uint64_t>(out, t.value.cols());
    out.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(std::string_view(out)));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IntegrityError(path.string() + ": not a checkpoint (bad magic)");

  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointFormatVersion)
    throw IncompatibleError(path.string() + ": checkpoint format_version " + std::to_string(version) +
                            ", this build reads " + std::to_string(kCheckpointFormatVersion));

  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (fnv1a(std::string_view(bytes.data(), body)) != stored)
    throw IntegrityError(path.string() + ": checksum mismatch");

  Reader r(bytes, body);
  r.str(4);
  r.get<std::uint32_t>();
  const auto hlen = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path.string() + ": header: " + e.what());
  }

  Checkpoint c;
  try {
    c.config = TrainingConfig::from_json(header.at("config"), TrainingConfig::paper_scale());
    const auto& d = header.at("dims");
    c.dims = {d.at("word_vocab"), d.at("char_vocab"), d.at("answers"), d.at("object_dim")};
    c.vocab_fingerprint = header.at("vocab_fingerprint");
    c.epoch = header.at("epoch");
    c.best_score = header.at("best_score");
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path.string() + ": header field: " + e.what());
  }
  const std::size_t n = header.value("tensors", std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.str(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols != 0 && rows > (body - r.pos()) / sizeof(double) / cols)
      throw IntegrityError(path.string() + ": tensor " + t.name + " exceeds file size");
    std::vector<double> data(rows * cols);
    const std::string raw = r.str(data.size() * sizeof(double));
    std::memcpy(data.data(), raw.data(), raw.size());
    t.value = Matrix(rows, cols, std::move(data));
    c.tensors.push_back(std::move(t));
  }
  if (r.pos() != body) throw IntegrityError(path.string() + ": trailing bytes after tensors");
  return c;
}

Checkpoint capture(IogModel& model, const std::string& vocab_fingerprint, std::size_t epoch, double best_score) {
  Checkpoint c;
  c.config = model.config();
  c.dims = model.dims();
  c.vocab_fingerprint = vocab_fingerprint;
  c.epoch = epoch;
  c.best_score = best_score;
  for (Parameter* p : model.all_parameters()) c.tensors.push_back({p->name, p->value});
  return c;
}

void capture_optimizer(const Adam& opt, Checkpoint& ckpt) {
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const std::string& pn = opt.params()[i]->name;
    ckpt.tensors.push_back({adam_key(opt.name(), "m", pn), opt.first_moments()[i]});
    ckpt.tensors.push_back({adam_key(opt.name(), "v", pn), opt.second_moments()[i]});
  }
  ckpt.tensors.push_back({"adam." + opt.name() + ".steps", Matrix(1, 1, static_cast<double>(opt.steps()))});
}

void restore(IogModel& model, const Checkpoint& ckpt) {
  if (ckpt.config.shape_fingerprint() != model.config().shape_fingerprint())
    throw IncompatibleError("checkpoint was trained with different model dimensions");
  if (!(ckpt.dims == model.dims())) throw IncompatibleError("checkpoint was trained on different vocabularies");
  for (Parameter* p : model.all_parameters()) {
    const Matrix* m = ckpt.find(p->name);
    if (!m) throw IncompatibleError("checkpoint lacks parameter " + p->name);
    if (!m->same_shape(p->value))
      throw IncompatibleError("parameter " + p->name + ": checkpoint " + m->shape_string() + ", model " +
                              p->value.shape_string());
    p->value = *m;
  }
}

void restore_optimizer(Adam& opt, const Checkpoint& ckpt) {
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const std::string& pn = opt.params()[i]->name;
    const Matrix* m = ckpt.find(adam_key(opt.name(), "m", pn));
    const Matrix* v = ckpt.find(adam_key(opt.name(), "v", pn));
    if (!m || !v) throw IncompatibleError("checkpoint lacks optimizer state for " + pn);
    opt.first_moments()[i] = *m;
    opt.second_moments()[i] = *v;
  }
  const Matrix* s = ckpt.find("adam." + opt.name() + ".steps");
  if (!s) throw IncompatibleError("checkpoint lacks optimizer step count for " + opt.name());
  opt.set_steps(static_cast<long>((*s)[0]));
}

std::unique_ptr<IogModel> model_from_checkpoint(const Checkpoint& ckpt) {
  auto m = std::make_unique<IogModel>(ckpt.config, ckpt.dims);
  restore(*m, ckpt);
  return m;
}

}  // namespace iog
