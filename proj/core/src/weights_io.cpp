#include "nightenh/weights_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nightenh/errors.hpp"

namespace fs = std::filesystem;

namespace nightenh {

namespace {

bool name_ok(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-') return false;
    return true;
}

long long entry_numel(const ArchiveEntry& e) {
    long long n = 1;
    for (int d : e.shape) n *= d;
    // conv entries store the kernel followed by one bias value per output
    // channel in the same file.
    if (e.kind == "conv") n += e.shape.empty() ? 0 : e.shape[0];
    return n;
}

// Stored bytes are little-endian; this code targets little-endian hosts.
void read_f32(const fs::path& p, std::vector<float>& out, long long expect) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open weight file: " + p.string());
    f.seekg(0, std::ios::end);
    const auto bytes = static_cast<long long>(f.tellg());
    if (bytes != expect * 4)
        throw IoError("weight file " + p.string() + " holds " + std::to_string(bytes / 4) + " floats, expected " +
                      std::to_string(expect));
    f.seekg(0);
    out.resize(static_cast<size_t>(expect));
    f.read(reinterpret_cast<char*>(out.data()), bytes);
    if (!f) throw IoError("short read on weight file: " + p.string());
}

} // namespace

const ArchiveEntry* WeightArchive::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

Tensor WeightArchive::tensor(const std::string& name) const {
    const ArchiveEntry* e = find(name);
    if (!e) throw IoError("weight archive is missing entry: " + name);
    if (e->kind != "tensor") throw IoError("archive entry " + name + " is not a tensor");
    return Tensor(e->shape, e->data);
}

void WeightArchive::add_tensor(const std::string& name, const Tensor& t) {
    ArchiveEntry e;
    e.name = name;
    e.kind = "tensor";
    e.shape = t.shape();
    e.data.assign(t.data(), t.data() + t.numel());
    entries.push_back(std::move(e));
}

WeightArchive load_archive(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream mf(root / "manifest.txt");
    if (!mf) throw IoError("cannot open manifest: " + (root / "manifest.txt").string());
    WeightArchive archive;
    std::string line;
    int lineno = 0;
    while (std::getline(mf, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        ArchiveEntry e;
        is >> e.name >> e.kind;
        if (e.name.empty() || e.kind.empty())
            throw IoError("malformed manifest line " + std::to_string(lineno) + " in " + dir);
        if (!name_ok(e.name)) throw IoError("illegal entry name '" + e.name + "' in " + dir);
        int d;
        while (is >> d) {
            if (d <= 0) throw IoError("non-positive extent in manifest line " + std::to_string(lineno));
            e.shape.push_back(d);
        }
        if (e.has_data()) {
            if (e.shape.empty()) throw IoError("entry " + e.name + " needs a shape");
            read_f32(root / (e.name + ".bin"), e.data, entry_numel(e));
        }
        archive.entries.push_back(std::move(e));
    }
    if (archive.entries.empty()) throw IoError("empty manifest: " + dir);
    return archive;
}

void save_archive(const WeightArchive& archive, const std::string& dir) {
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    std::ofstream mf(root / "manifest.txt", std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest: " + (root / "manifest.txt").string());
    for (const auto& e : archive.entries) {
        if (!name_ok(e.name)) throw IoError("illegal entry name '" + e.name + "'");
        mf << e.name << ' ' << e.kind;
        for (int d : e.shape) mf << ' ' << d;
        mf << '\n';
        if (e.has_data()) {
            if (static_cast<long long>(e.data.size()) != entry_numel(e))
                throw IoError("entry " + e.name + " data does not match its shape");
            std::ofstream bf(root / (e.name + ".bin"), std::ios::binary | std::ios::trunc);
            if (!bf) throw IoError("cannot write weight file for " + e.name);
            bf.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * 4));
            if (!bf) throw IoError("short write on weight file for " + e.name);
        }
    }
}

} // namespace nightenh
