#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "unir/index_file.hpp"
#include "unir/model.hpp"

namespace unir {

// Everything a search request needs; immutable once built.
struct SearchEngine {
  ModelParams params;
  std::shared_ptr<const EmbeddingStore> features;  // raw image features, looked up by img_id
  LoadedIndex index;
};

std::shared_ptr<const SearchEngine> load_engine(const std::filesystem::path& index_file,
                                                const std::filesystem::path& checkpoint,
                                                const std::filesystem::path& features);

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Request handling without any transport, so it can be driven directly.
class SearchService {
 public:
  SearchService() = default;
  explicit SearchService(std::shared_ptr<const SearchEngine> engine) : engine_(std::move(engine)) {}

  void set_engine(std::shared_ptr<const SearchEngine> engine);
  std::shared_ptr<const SearchEngine> engine() const;

  // body: {"txt": str|null, "img_id": str|null, "instruction": str|null, "k": int}
  HttpResponse search(const std::string& body) const;
  HttpResponse healthz() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const SearchEngine> engine_;
};

class HttpServer {
 public:
  explicit HttpServer(const SearchService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // port 0 picks a free port; returns the bound port, throws Io on failure.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace unir
