#include "unir/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include "unir/error.hpp"
#include "unir/train.hpp"

namespace unir {

using nlohmann::json;

std::shared_ptr<const SearchEngine> load_engine(const std::filesystem::path& index_file,
                                                const std::filesystem::path& checkpoint,
                                                const std::filesystem::path& features) {
  auto engine = std::make_shared<SearchEngine>();
  engine->params = read_checkpoint(checkpoint);
  engine->features = std::make_shared<const EmbeddingStore>(read_embeddings(features));
  engine->index = load_index(index_file, engine->params.weights);
  const EmbeddingStore& store = engine->index.flat().store();
  if (store.mode() != engine->params.mode)
    throw Error(ErrorCode::ModeMismatch, "index mode differs from the checkpoint mode");
  if (store.dim() != engine->params.dim())
    throw Error(ErrorCode::DimMismatch, "index dim differs from the checkpoint dim");
  return engine;
}

void SearchService::set_engine(std::shared_ptr<const SearchEngine> engine) {
  std::lock_guard lock(mu_);
  engine_ = std::move(engine);
}

std::shared_ptr<const SearchEngine> SearchService::engine() const {
  std::lock_guard lock(mu_);
  return engine_;
}

namespace {

HttpResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

std::optional<std::string> optional_string(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  if (!body[key].is_string()) throw std::invalid_argument(std::string(key) + " must be a string or null");
  return body[key].get<std::string>();
}

}  // namespace

HttpResponse SearchService::search(const std::string& body) const {
  const auto engine = this->engine();
  if (!engine) return error_response(503, "index not loaded");

  std::optional<std::string> txt, img_id, instruction;
  std::size_t k = 0;
  try {
    const json req = json::parse(body);
    if (!req.is_object()) throw std::invalid_argument("body must be a JSON object");
    txt = optional_string(req, "txt");
    img_id = optional_string(req, "img_id");
    instruction = optional_string(req, "instruction");
    if (!req.contains("k") || !req["k"].is_number_integer() || req["k"].get<long long>() < 1)
      throw std::invalid_argument("k must be a positive integer");
    k = req["k"].get<std::size_t>();
  } catch (const std::exception& e) {
    return error_response(400, e.what());
  }
  if (!txt && !img_id) return error_response(400, "need txt or img_id");

  try {
    const QueryEmbedding q = embed_query_inputs(txt, img_id, instruction, *engine->features, engine->params);
    const RetrievalResult r = engine->index.search(q, k, 0, kernels::Exec::Serial);
    json out = json::array();
    for (const auto& e : r.entries) out.push_back({{"did", e.did}, {"score", e.score}});
    return {200, out.dump()};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingFeature) return error_response(404, e.what());
    return error_response(400, e.what());
  }
}

HttpResponse SearchService::healthz() const { return {200, "ok", "text/plain"}; }

struct HttpServer::Impl {
  explicit Impl(const SearchService& s) : service(s) {}
  const SearchService& service;
  httplib::Server server;
};

HttpServer::HttpServer(const SearchService& service) : impl_(std::make_unique<Impl>(service)) {
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Post("/search", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, impl_->service.search(req.body));
  });
  impl_->server.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, impl_->service.healthz());
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace unir
