#include "velm/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string_view>

#include "velm/error.hpp"

namespace velm {
namespace {

constexpr std::string_view kMagic = "RNNLM1";
constexpr std::uint64_t kMaxDim = 1ULL << 32;

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) { put_u64(buf, std::bit_cast<std::uint64_t>(d)); }

template <class Dense>
void put_tensor(std::string& buf, const Dense& t) {
  // Eigen's default storage is column-major, so data() is already in order.
  for (Eigen::Index i = 0; i < t.size(); ++i) put_f64(buf, t.data()[i]);
}

class Reader {
 public:
  Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <class Dense>
  void tensor(Dense& t, const char* what) {
    need(static_cast<std::size_t>(t.size()) * 8, what);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = std::bit_cast<double>(u64(what));
  }

  bool at_end() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& msg) const { throw Error(source_ + ": " + msg); }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) fail(std::string("truncated checkpoint while reading ") + what);
  }

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const RnnLmModel& model, std::ostream& out) {
  model.check_consistent();
  std::string buf(kMagic);
  put_u64(buf, model.input_dim());
  put_u64(buf, model.hidden_dim());
  put_u64(buf, model.num_layers());
  put_u64(buf, model.vocab.size());
  put_u64(buf, model.vocab.shortlist_size());
  for (const auto& w : model.vocab.words()) {
    put_u64(buf, w.size());
    buf += w;
  }
  const auto& p = model.params;
  put_tensor(buf, p.input_embeddings);
  for (const auto& l : p.layers) {
    put_tensor(buf, l.input_weights);
    put_tensor(buf, l.recurrent_weights);
    put_tensor(buf, l.bias);
  }
  put_tensor(buf, p.output_embeddings);
  put_tensor(buf, p.output_bias);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const RnnLmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  save_checkpoint(model, out);
}

RnnLmModel load_checkpoint(std::istream& in, const std::string& source) {
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}), source);
  if (r.bytes(kMagic.size(), "magic") != kMagic) r.fail("not an RNNLM1 checkpoint (bad magic)");
  const auto ds = r.u64("header");
  const auto dh = r.u64("header");
  const auto layers = r.u64("header");
  const auto vocab_size = r.u64("header");
  const auto shortlist = r.u64("header");
  if (ds == 0 || dh == 0 || layers == 0 || ds > kMaxDim || dh > kMaxDim || layers > 1024) {
    r.fail("invalid model dimensions in header");
  }
  if (vocab_size > kMaxDim || shortlist > vocab_size || shortlist < kReservedCount) {
    r.fail("inconsistent vocabulary sizes in header");
  }
  std::vector<std::string> words;
  words.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    const auto len = r.u64("vocabulary");
    if (len > (1u << 20)) r.fail("implausible word length in vocabulary");
    words.push_back(r.bytes(len, "vocabulary"));
  }
  Vocabulary vocab;
  try {
    vocab = Vocabulary(std::move(words), shortlist);
  } catch (const Error& e) {
    r.fail(std::string("bad embedded vocabulary: ") + e.what());
  }
  RnnLmModel model = make_zero_model(std::move(vocab), {ds, dh, layers});
  auto& p = model.params;
  r.tensor(p.input_embeddings, "input embeddings");
  for (auto& l : p.layers) {
    r.tensor(l.input_weights, "LSTM weights");
    r.tensor(l.recurrent_weights, "LSTM weights");
    r.tensor(l.bias, "LSTM weights");
  }
  r.tensor(p.output_embeddings, "output embeddings");
  r.tensor(p.output_bias, "output bias");
  if (!r.at_end()) r.fail("trailing bytes after checkpoint payload");
  return model;
}

RnnLmModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return load_checkpoint(in, path.string());
}

}  // namespace velm
