#pragma once

// Little-endian record files shared by the embedding cache and the index:
//   magic (6 bytes) | u32 dimension | u64 count | count x record
//   record = u32 key_len | key bytes | dimension x f32

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "ragbench/error.hpp"

namespace ragbench::binio {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::string_view s) { buf_.append(s); }

    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == data_.size(); }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw DataError("truncated file at byte offset " + std::to_string(pos_));
        }
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

struct Record {
    std::string key;
    std::vector<float> values;
};

inline std::string encode_records(std::string_view magic, std::uint32_t dimension,
                                  const std::vector<Record>& records) {
    Writer w;
    w.bytes(magic);
    w.u32(dimension);
    w.u64(records.size());
    for (const auto& r : records) {
        if (r.values.size() != dimension) throw DataError("record '" + r.key + "' has wrong dimension");
        w.u32(static_cast<std::uint32_t>(r.key.size()));
        w.bytes(r.key);
        for (float v : r.values) w.f32(v);
    }
    return w.data();
}

struct DecodedRecords {
    std::uint32_t dimension = 0;
    std::vector<Record> records;
};

inline DecodedRecords decode_records(std::string_view magic, std::string_view data) {
    if (data.size() < magic.size() || data.substr(0, magic.size()) != magic) {
        throw DataError("bad magic");
    }
    Reader r(data.substr(magic.size()));
    const auto at = [&] { return magic.size() + r.offset(); };
    DecodedRecords out;
    try {
        out.dimension = r.u32();
        const std::uint64_t count = r.u64();
        for (std::uint64_t i = 0; i < count; ++i) {
            Record rec;
            const auto key_len = r.u32();
            rec.key = std::string(r.bytes(key_len));
            rec.values.resize(out.dimension);
            for (auto& v : rec.values) v = r.f32();
            out.records.push_back(std::move(rec));
        }
    } catch (const DataError&) {
        throw DataError("truncated file at byte offset " + std::to_string(at()));
    }
    if (!r.at_end()) throw DataError("trailing bytes at byte offset " + std::to_string(at()));
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write via a sibling temp file and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& p, std::string_view bytes) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) throw DataError("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace ragbench::binio
